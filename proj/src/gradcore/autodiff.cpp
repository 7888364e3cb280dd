#include "mcpst/autodiff.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_set>

namespace mcpst::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using Eigen::Index;

constexpr double kTwoPi = 2.0 * std::numbers::pi;

using NodePtr = std::shared_ptr<Node>;

thread_local BranchTrace* active_trace = nullptr;

template <class Code>
void trace_branches(const Tensor& t, Code code) {
  if (BranchTrace* trace = active_trace) {
    for (std::size_t i = 0; i < t.size(); ++i) trace->record(code(t[i]));
  }
}

Var make(const char* op, Tensor value, std::vector<NodePtr> parents,
         std::function<void(Node&)> backward_fn) {
  if (!value.all_finite()) {
    throw NumericError(std::string("non-finite value produced by '") + op + "'");
  }
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = op;
  bool needs = false;
  for (const auto& p : parents) needs = needs || p->requires_grad;
  if (needs) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward = std::move(backward_fn);
  }
  return Var(std::move(node));
}

// Broadcasting --------------------------------------------------------------

struct BroadcastPlan {
  Shape out;
  std::vector<std::size_t> stride_a;
  std::vector<std::size_t> stride_b;
};

std::vector<std::size_t> natural_strides(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b, const char* op) {
  const std::size_t rank = std::max(a.size(), b.size());
  BroadcastPlan p;
  p.out.assign(rank, 1);
  p.stride_a.assign(rank, 0);
  p.stride_b.assign(rank, 0);
  const auto sa = natural_strides(a);
  const auto sb = natural_strides(b);
  for (std::size_t d = 0; d < rank; ++d) {
    const std::ptrdiff_t ia = static_cast<std::ptrdiff_t>(d) -
                              static_cast<std::ptrdiff_t>(rank - a.size());
    const std::ptrdiff_t ib = static_cast<std::ptrdiff_t>(d) -
                              static_cast<std::ptrdiff_t>(rank - b.size());
    const std::size_t da = ia >= 0 ? a[ia] : 1;
    const std::size_t db = ib >= 0 ? b[ib] : 1;
    if (da != db && da != 1 && db != 1) {
      throw ShapeError(std::string("cannot broadcast ") + shape_str(a) + " with " +
                       shape_str(b) + " in '" + op + "'");
    }
    p.out[d] = std::max(da, db);
    if (ia >= 0 && da != 1) p.stride_a[d] = sa[ia];
    if (ib >= 0 && db != 1) p.stride_b[d] = sb[ib];
  }
  return p;
}

template <class F>
void for_each_broadcast(const BroadcastPlan& p, F&& f) {
  const std::size_t rank = p.out.size();
  const std::size_t total = shape_numel(p.out);
  if (total == 0) return;
  if (rank == 0) {
    f(0, 0, 0);
    return;
  }
  const std::size_t inner = p.out[rank - 1];
  const std::size_t sa = p.stride_a[rank - 1];
  const std::size_t sb = p.stride_b[rank - 1];
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t o = 0; o < total; o += inner) {
    for (std::size_t k = 0; k < inner; ++k) f(o + k, ia + k * sa, ib + k * sb);
    for (std::size_t d = rank - 1; d-- > 0;) {
      ++idx[d];
      ia += p.stride_a[d];
      ib += p.stride_b[d];
      if (idx[d] < p.out[d]) break;
      ia -= p.stride_a[d] * p.out[d];
      ib -= p.stride_b[d] * p.out[d];
      idx[d] = 0;
    }
  }
}

template <class Fwd, class Bwd>
Var binary(const char* op, const Var& a, const Var& b, Fwd fwd, Bwd bwd) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out;
  if (av.shape() == bv.shape()) {
    out = Tensor(av.shape());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i], bv[i]);
    return make(op, std::move(out), {a.ptr(), b.ptr()}, [bwd](Node& self) {
      Node& pa = *self.parents[0];
      Node& pb = *self.parents[1];
      const Tensor& g = self.grad;
      double* ga = pa.requires_grad ? pa.grad_buffer().data() : nullptr;
      double* gb = pb.requires_grad ? pb.grad_buffer().data() : nullptr;
      for (std::size_t i = 0; i < g.size(); ++i) {
        bwd(g[i], pa.value[i], pb.value[i], self.value[i], ga ? ga + i : nullptr,
            gb ? gb + i : nullptr);
      }
    });
  }
  BroadcastPlan plan = plan_broadcast(av.shape(), bv.shape(), op);
  out = Tensor(plan.out);
  for_each_broadcast(plan, [&](std::size_t o, std::size_t ia, std::size_t ib) {
    out[o] = fwd(av[ia], bv[ib]);
  });
  return make(op, std::move(out), {a.ptr(), b.ptr()}, [plan, bwd](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const Tensor& g = self.grad;
    double* ga = pa.requires_grad ? pa.grad_buffer().data() : nullptr;
    double* gb = pb.requires_grad ? pb.grad_buffer().data() : nullptr;
    for_each_broadcast(plan, [&](std::size_t o, std::size_t ia, std::size_t ib) {
      bwd(g[o], pa.value[ia], pb.value[ib], self.value[o], ga ? ga + ia : nullptr,
          gb ? gb + ib : nullptr);
    });
  });
}

template <class Fwd, class Deriv>
Var unary(const char* op, const Var& a, Fwd fwd, Deriv deriv) {
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  return make(op, std::move(out), {a.ptr()}, [deriv](Node& self) {
    Node& pa = *self.parents[0];
    Tensor& ga = pa.grad_buffer();
    const Tensor& g = self.grad;
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i] * deriv(pa.value[i], self.value[i]);
    }
  });
}

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t len = 1;
  std::size_t inner = 1;
};

AxisSplit split_at(const Shape& s, std::size_t axis) {
  if (axis >= s.size()) throw ShapeError("axis out of range for shape " + shape_str(s));
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.len = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

}  // namespace

Tensor& Node::grad_buffer() {
  if (grad.empty() && !value.empty()) grad = Tensor(value.shape());
  return grad;
}

Tensor Var::grad() const {
  if (!node_) throw std::logic_error("grad() on undefined Var");
  if (node_->grad.empty()) return Tensor(node_->value.shape());
  return node_->grad;
}

BranchTrace::BranchTrace() : previous_(active_trace) { active_trace = this; }
BranchTrace::~BranchTrace() { active_trace = previous_; }
BranchTrace* BranchTrace::active() noexcept { return active_trace; }

Var constant(Tensor value) { return make("constant", std::move(value), {}, nullptr); }

Var leaf(Tensor value, bool requires_grad) {
  if (!value.all_finite()) throw NumericError("non-finite value in leaf tensor");
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  node->op = "leaf";
  return Var(std::move(node));
}

void backward(const Var& loss) {
  if (!loss.defined()) throw std::logic_error("backward on undefined Var");
  if (loss.value().size() != 1) {
    throw ShapeError("backward requires a single-element loss, got " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) return;

  Node* root = loss.node();
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    Node* n = stack.back().first;
    std::size_t& next = stack.back().second;
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  root->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (!n->backward || n->grad.empty()) continue;
    if (!n->grad.all_finite()) {
      throw NumericError(std::string("non-finite gradient reaching '") + n->op + "'");
    }
    n->backward(*n);
  }
}

// --- arithmetic ---------------------------------------------------------------

Var add(const Var& a, const Var& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double g, double, double, double, double* ga, double* gb) {
        if (ga) *ga += g;
        if (gb) *gb += g;
      });
}

Var sub(const Var& a, const Var& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double g, double, double, double, double* ga, double* gb) {
        if (ga) *ga += g;
        if (gb) *gb -= g;
      });
}

Var mul(const Var& a, const Var& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double g, double x, double y, double, double* ga, double* gb) {
        if (ga) *ga += g * y;
        if (gb) *gb += g * x;
      });
}

Var div(const Var& a, const Var& b) {
  return binary(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double g, double, double y, double out, double* ga, double* gb) {
        if (ga) *ga += g / y;
        if (gb) *gb -= g * out / y;
      });
}

Var scale(const Var& a, double c) {
  return unary(
      "scale", a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Var add_scalar(const Var& a, double c) {
  return unary(
      "add_scalar", a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var expand(const Var& a, const Shape& shape) {
  BroadcastPlan plan = plan_broadcast(a.shape(), shape, "expand");
  if (plan.out != shape) {
    throw ShapeError("cannot expand " + shape_str(a.shape()) + " to " + shape_str(shape));
  }
  const Tensor& av = a.value();
  Tensor out(shape);
  for_each_broadcast(plan, [&](std::size_t o, std::size_t ia, std::size_t) { out[o] = av[ia]; });
  return make("expand", std::move(out), {a.ptr()}, [plan](Node& self) {
    Tensor& ga = self.parents[0]->grad_buffer();
    const Tensor& g = self.grad;
    for_each_broadcast(plan, [&](std::size_t o, std::size_t ia, std::size_t) { ga[ia] += g[o]; });
  });
}

// --- unary maps -----------------------------------------------------------------

Var exp(const Var& a) {
  return unary(
      "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(const Var& a) {
  return unary(
      "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var sin(const Var& a) {
  return unary(
      "sin", a, [](double x) { return std::sin(x); }, [](double x, double) { return std::cos(x); });
}

Var cos(const Var& a) {
  return unary(
      "cos", a, [](double x) { return std::cos(x); },
      [](double x, double) { return -std::sin(x); });
}

Var tanh(const Var& a) {
  return unary(
      "tanh", a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(const Var& a) {
  return unary(
      "sigmoid", a, [](double x) { return stable_sigmoid(x); },
      [](double, double y) { return y * (1.0 - y); });
}

Var relu(const Var& a) {
  trace_branches(a.value(), [](double x) { return x > 0.0 ? 1LL : 0LL; });
  return unary(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var gelu(const Var& a) {
  return unary(
      "gelu", a, [](double x) { return x * std_normal_cdf(x); },
      [](double x, double) {
        const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
        return std_normal_cdf(x) + x * pdf;
      });
}

Var softplus(const Var& a) {
  return unary(
      "softplus", a,
      [](double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); },
      [](double x, double) { return stable_sigmoid(x); });
}

Var sqrt(const Var& a) {
  return unary(
      "sqrt", a, [](double x) { return std::sqrt(x); },
      [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Var square(const Var& a) {
  return unary(
      "square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var clip(const Var& a, double lo, double hi) {
  trace_branches(a.value(), [lo, hi](double x) { return x <= lo ? -1LL : (x >= hi ? 1LL : 0LL); });
  return unary(
      "clip", a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

Var mod_2pi(const Var& a) {
  trace_branches(a.value(), [](double x) { return static_cast<long long>(std::floor(x / kTwoPi)); });
  return unary(
      "mod_2pi", a,
      [](double x) {
        double y = x - kTwoPi * std::floor(x / kTwoPi);
        if (y >= kTwoPi || y < 0.0) y = 0.0;
        return y;
      },
      [](double, double) { return 1.0; });
}

Var atan2(const Var& y, const Var& x) {
  if (y.shape() != x.shape()) {
    throw ShapeError("atan2 requires equal shapes, got " + shape_str(y.shape()) + " and " +
                     shape_str(x.shape()));
  }
  if (active_trace) {
    // The branch cut lies on the negative x axis.
    for (std::size_t i = 0; i < x.value().size(); ++i) {
      const double xx = x.value()[i];
      active_trace->record(xx < 0.0 ? (y.value()[i] >= 0.0 ? 1 : -1) : 0);
    }
  }
  return binary(
      "atan2", y, x,
      [](double yy, double xx) { return (yy == 0.0 && xx == 0.0) ? 0.0 : std::atan2(yy, xx); },
      [](double g, double yy, double xx, double, double* gy, double* gx) {
        const double r2 = xx * xx + yy * yy;
        if (r2 == 0.0) return;
        if (gy) *gy += g * xx / r2;
        if (gx) *gx -= g * yy / r2;
      });
}

// --- linear algebra ---------------------------------------------------------------

Var matmul(const Var& a, const Var& w) { return linear(a, w, Var()); }

Var linear(const Var& x, const Var& w, const Var& b) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  if (wv.rank() != 2 || xv.rank() == 0 || xv.shape().back() != wv.dim(0)) {
    throw ShapeError("linear: input " + shape_str(xv.shape()) + " incompatible with weight " +
                     shape_str(wv.shape()));
  }
  const std::size_t k = wv.dim(0);
  const std::size_t n = wv.dim(1);
  const std::size_t rows = xv.size() / k;
  if (b.defined() && b.value().size() != n) {
    throw ShapeError("linear: bias " + shape_str(b.shape()) + " does not match width " +
                     std::to_string(n));
  }
  Shape out_shape = xv.shape();
  out_shape.back() = n;
  Tensor out(out_shape);
  MatMap o(out.data(), rows, n);
  o.noalias() = ConstMatMap(xv.data(), rows, k) * ConstMatMap(wv.data(), k, n);
  if (b.defined()) {
    o.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.value().data(), n);
  }
  std::vector<NodePtr> parents{x.ptr(), w.ptr()};
  if (b.defined()) parents.push_back(b.ptr());
  return make("linear", std::move(out), std::move(parents), [rows, k, n](Node& self) {
    Node& px = *self.parents[0];
    Node& pw = *self.parents[1];
    ConstMatMap g(self.grad.data(), rows, n);
    if (px.requires_grad) {
      MatMap(px.grad_buffer().data(), rows, k).noalias() +=
          g * ConstMatMap(pw.value.data(), k, n).transpose();
    }
    if (pw.requires_grad) {
      MatMap(pw.grad_buffer().data(), k, n).noalias() +=
          ConstMatMap(px.value.data(), rows, k).transpose() * g;
    }
    if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
      // Plain row loop: Eigen's vectorised reduction order depends on buffer alignment.
      double* gb = self.parents[2]->grad_buffer().data();
      const double* gs = self.grad.data();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < n; ++c) gb[c] += gs[r * n + c];
      }
    }
  });
}

Var bmm(const Var& a, const Var& b, bool transpose_b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() < 2 || sa.size() != sb.size() ||
      !std::equal(sa.begin(), sa.end() - 2, sb.begin())) {
    throw ShapeError("bmm: incompatible shapes " + shape_str(sa) + " and " + shape_str(sb));
  }
  const std::size_t m = sa[sa.size() - 2];
  const std::size_t k = sa.back();
  const std::size_t bk = transpose_b ? sb.back() : sb[sb.size() - 2];
  const std::size_t n = transpose_b ? sb[sb.size() - 2] : sb.back();
  if (bk != k) throw ShapeError("bmm: inner dimensions differ");
  const std::size_t batch = shape_numel(sa) / (m * k);
  Shape out_shape = sa;
  out_shape.back() = n;
  Tensor out(out_shape);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < batch; ++i) {
    ConstMatMap am(av.data() + i * m * k, m, k);
    MatMap om(out.data() + i * m * n, m, n);
    if (transpose_b) {
      om.noalias() = am * ConstMatMap(bv.data() + i * n * k, n, k).transpose();
    } else {
      om.noalias() = am * ConstMatMap(bv.data() + i * k * n, k, n);
    }
  }
  return make("bmm", std::move(out), {a.ptr(), b.ptr()}, [=](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    double* ga = pa.requires_grad ? pa.grad_buffer().data() : nullptr;
    double* gb = pb.requires_grad ? pb.grad_buffer().data() : nullptr;
    for (std::size_t i = 0; i < batch; ++i) {
      ConstMatMap g(self.grad.data() + i * m * n, m, n);
      ConstMatMap am(pa.value.data() + i * m * k, m, k);
      if (transpose_b) {
        ConstMatMap bm(pb.value.data() + i * n * k, n, k);
        if (ga) MatMap(ga + i * m * k, m, k).noalias() += g * bm;
        if (gb) MatMap(gb + i * n * k, n, k).noalias() += g.transpose() * am;
      } else {
        ConstMatMap bm(pb.value.data() + i * k * n, k, n);
        if (ga) MatMap(ga + i * m * k, m, k).noalias() += g * bm.transpose();
        if (gb) MatMap(gb + i * k * n, k, n).noalias() += am.transpose() * g;
      }
    }
  });
}

Var mix_axis(const Tensor& m, const Var& x, std::size_t axis) {
  if (m.rank() != 2) throw ShapeError("mix_axis: matrix must be rank 2");
  const AxisSplit s = split_at(x.shape(), axis);
  if (m.dim(1) != s.len) {
    throw ShapeError("mix_axis: matrix " + shape_str(m.shape()) + " cannot act on axis " +
                     std::to_string(axis) + " of " + shape_str(x.shape()));
  }
  const std::size_t p = m.dim(0);
  Shape out_shape = x.shape();
  out_shape[axis] = p;
  Tensor out(out_shape);
  ConstMatMap mm(m.data(), p, s.len);
  for (std::size_t o = 0; o < s.outer; ++o) {
    MatMap(out.data() + o * p * s.inner, p, s.inner).noalias() =
        mm * ConstMatMap(x.value().data() + o * s.len * s.inner, s.len, s.inner);
  }
  return make("mix_axis", std::move(out), {x.ptr()}, [m, s, p](Node& self) {
    Tensor& gx = self.parents[0]->grad_buffer();
    ConstMatMap mm(m.data(), p, s.len);
    for (std::size_t o = 0; o < s.outer; ++o) {
      MatMap(gx.data() + o * s.len * s.inner, s.len, s.inner).noalias() +=
          mm.transpose() * ConstMatMap(self.grad.data() + o * p * s.inner, p, s.inner);
    }
  });
}

// --- structure --------------------------------------------------------------------

Var reshape(const Var& a, const Shape& shape) {
  Tensor out = a.value().reshaped(shape);
  return make("reshape", std::move(out), {a.ptr()}, [](Node& self) {
    Tensor& ga = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
  });
}

Var permute(const Var& a, const std::vector<std::size_t>& perm) {
  const Shape& in = a.shape();
  const std::size_t rank = in.size();
  if (perm.size() != rank) throw ShapeError("permute: rank mismatch");
  std::vector<bool> seen(rank, false);
  for (auto p : perm) {
    if (p >= rank || seen[p]) throw ShapeError("permute: invalid permutation");
    seen[p] = true;
  }
  Shape out_shape(rank);
  const auto in_strides = natural_strides(in);
  std::vector<std::size_t> src_stride(rank);
  for (std::size_t d = 0; d < rank; ++d) {
    out_shape[d] = in[perm[d]];
    src_stride[d] = in_strides[perm[d]];
  }
  // Walk output rows of the last axis; each row reads the source at a fixed stride.
  auto for_each_row = [out_shape, src_stride](auto&& row) {
    const std::size_t r = out_shape.size();
    const std::size_t len = out_shape[r - 1];
    const std::size_t step = src_stride[r - 1];
    const std::size_t rows = len ? shape_numel(out_shape) / len : 0;
    std::vector<std::size_t> idx(r, 0);
    std::size_t src = 0;
    for (std::size_t o = 0; o < rows; ++o) {
      row(o * len, src, len, step);
      for (std::size_t d = r - 1; d-- > 0;) {
        ++idx[d];
        src += src_stride[d];
        if (idx[d] < out_shape[d]) break;
        src -= src_stride[d] * out_shape[d];
        idx[d] = 0;
      }
    }
  };
  Tensor out(out_shape);
  const double* av = a.value().data();
  double* ov = out.data();
  for_each_row([&](std::size_t o, std::size_t src, std::size_t len, std::size_t step) {
    for (std::size_t j = 0; j < len; ++j) ov[o + j] = av[src + j * step];
  });
  return make("permute", std::move(out), {a.ptr()}, [for_each_row](Node& self) {
    double* ga = self.parents[0]->grad_buffer().data();
    const double* g = self.grad.data();
    for_each_row([&](std::size_t o, std::size_t src, std::size_t len, std::size_t step) {
      for (std::size_t j = 0; j < len; ++j) ga[src + j * step] += g[o + j];
    });
  });
}

Var concat(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const Shape& ref = parts[0].shape();
  if (axis >= ref.size()) throw ShapeError("concat: axis out of range");
  std::vector<std::size_t> lens;
  std::size_t total_len = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != ref.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (d != axis && s[d] != ref[d]) {
        throw ShapeError("concat: shape mismatch " + shape_str(s) + " vs " + shape_str(ref));
      }
    }
    lens.push_back(s[axis]);
    total_len += s[axis];
  }
  const AxisSplit s = split_at(ref, axis);
  Shape out_shape = ref;
  out_shape[axis] = total_len;
  Tensor out(out_shape);
  std::vector<NodePtr> parents;
  std::size_t offset = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Tensor& pv = parts[i].value();
    const std::size_t chunk = lens[i] * s.inner;
    for (std::size_t o = 0; o < s.outer; ++o) {
      std::copy_n(pv.data() + o * chunk, chunk,
                  out.data() + o * total_len * s.inner + offset * s.inner);
    }
    offset += lens[i];
    parents.push_back(parts[i].ptr());
  }
  return make("concat", std::move(out), std::move(parents), [lens, s, total_len](Node& self) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < lens.size(); ++i) {
      Node& p = *self.parents[i];
      const std::size_t chunk = lens[i] * s.inner;
      if (p.requires_grad) {
        Tensor& gp = p.grad_buffer();
        for (std::size_t o = 0; o < s.outer; ++o) {
          const double* src = self.grad.data() + o * total_len * s.inner + off * s.inner;
          double* dst = gp.data() + o * chunk;
          for (std::size_t j = 0; j < chunk; ++j) dst[j] += src[j];
        }
      }
      off += lens[i];
    }
  });
}

Var slice(const Var& a, std::size_t axis, std::size_t start, std::size_t stop,
          std::size_t step) {
  const AxisSplit s = split_at(a.shape(), axis);
  if (step == 0 || start >= stop || stop > s.len) {
    throw ShapeError("slice [" + std::to_string(start) + ", " + std::to_string(stop) +
                     ") invalid for axis of length " + std::to_string(s.len));
  }
  const std::size_t count = (stop - start + step - 1) / step;
  Shape out_shape = a.shape();
  out_shape[axis] = count;
  Tensor out(out_shape);
  const Tensor& av = a.value();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t c = 0; c < count; ++c) {
      std::copy_n(av.data() + (o * s.len + start + c * step) * s.inner, s.inner,
                  out.data() + (o * count + c) * s.inner);
    }
  }
  return make("slice", std::move(out), {a.ptr()}, [s, start, step, count](Node& self) {
    Tensor& ga = self.parents[0]->grad_buffer();
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t c = 0; c < count; ++c) {
        const double* src = self.grad.data() + (o * count + c) * s.inner;
        double* dst = ga.data() + (o * s.len + start + c * step) * s.inner;
        for (std::size_t j = 0; j < s.inner; ++j) dst[j] += src[j];
      }
    }
  });
}

// --- reductions -------------------------------------------------------------------

Var sum(const Var& a, std::size_t axis, bool keepdim) {
  const AxisSplit s = split_at(a.shape(), axis);
  Shape out_shape = a.shape();
  if (keepdim) {
    out_shape[axis] = 1;
  } else {
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
    if (out_shape.empty()) out_shape = {1};
  }
  Tensor out(out_shape);
  const Tensor& av = a.value();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t l = 0; l < s.len; ++l) {
      const double* src = av.data() + (o * s.len + l) * s.inner;
      double* dst = out.data() + o * s.inner;
      for (std::size_t j = 0; j < s.inner; ++j) dst[j] += src[j];
    }
  }
  return make("sum", std::move(out), {a.ptr()}, [s](Node& self) {
    Tensor& ga = self.parents[0]->grad_buffer();
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t l = 0; l < s.len; ++l) {
        const double* src = self.grad.data() + o * s.inner;
        double* dst = ga.data() + (o * s.len + l) * s.inner;
        for (std::size_t j = 0; j < s.inner; ++j) dst[j] += src[j];
      }
    }
  });
}

Var mean(const Var& a, std::size_t axis, bool keepdim) {
  const double n = static_cast<double>(a.shape().at(axis));
  return scale(sum(a, axis, keepdim), 1.0 / n);
}

Var sum_all(const Var& a) {
  const Tensor& av = a.value();
  double total = 0.0;
  for (double v : av.values()) total += v;
  return make("sum_all", Tensor::scalar(total), {a.ptr()}, [](Node& self) {
    Tensor& ga = self.parents[0]->grad_buffer();
    const double g = self.grad[0];
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
  });
}

Var mean_all(const Var& a) {
  return scale(sum_all(a), 1.0 / static_cast<double>(a.value().size()));
}

// --- normalisation ---------------------------------------------------------------

Var softmax_last(const Var& a) {
  const Tensor& av = a.value();
  const std::size_t width = av.shape().back();
  const std::size_t rows = av.size() / width;
  Tensor out(av.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = av.data() + r * width;
    double* y = out.data() + r * width;
    const double mx = *std::max_element(x, x + width);
    double z = 0.0;
    for (std::size_t j = 0; j < width; ++j) {
      y[j] = std::exp(x[j] - mx);
      z += y[j];
    }
    for (std::size_t j = 0; j < width; ++j) y[j] /= z;
  }
  return make("softmax", std::move(out), {a.ptr()}, [rows, width](Node& self) {
    Tensor& ga = self.parents[0]->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.value.data() + r * width;
      const double* g = self.grad.data() + r * width;
      double dot = 0.0;
      for (std::size_t j = 0; j < width; ++j) dot += g[j] * y[j];
      double* dst = ga.data() + r * width;
      for (std::size_t j = 0; j < width; ++j) dst[j] += y[j] * (g[j] - dot);
    }
  });
}

Var layer_norm_last(const Var& a, const Var& gamma, const Var& beta, double eps) {
  const Tensor& av = a.value();
  const std::size_t width = av.shape().back();
  const std::size_t rows = av.size() / width;
  if (gamma.defined() && gamma.value().size() != width) {
    throw ShapeError("layer_norm: gamma width mismatch");
  }
  if (beta.defined() && beta.value().size() != width) {
    throw ShapeError("layer_norm: beta width mismatch");
  }
  auto xhat = std::make_shared<std::vector<double>>(av.size());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  Tensor out(av.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = av.data() + r * width;
    double mu = 0.0;
    for (std::size_t j = 0; j < width; ++j) mu += x[j];
    mu /= static_cast<double>(width);
    double var = 0.0;
    for (std::size_t j = 0; j < width; ++j) var += (x[j] - mu) * (x[j] - mu);
    var /= static_cast<double>(width);
    const double inv = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = inv;
    for (std::size_t j = 0; j < width; ++j) {
      const double xh = (x[j] - mu) * inv;
      (*xhat)[r * width + j] = xh;
      const double gm = gamma.defined() ? gamma.value()[j] : 1.0;
      const double bt = beta.defined() ? beta.value()[j] : 0.0;
      out[r * width + j] = xh * gm + bt;
    }
  }
  std::vector<NodePtr> parents{a.ptr()};
  const int gamma_slot = gamma.defined() ? static_cast<int>(parents.size()) : -1;
  if (gamma.defined()) parents.push_back(gamma.ptr());
  const int beta_slot = beta.defined() ? static_cast<int>(parents.size()) : -1;
  if (beta.defined()) parents.push_back(beta.ptr());
  return make("layer_norm", std::move(out), std::move(parents),
              [=](Node& self) {
                Node& px = *self.parents[0];
                const Tensor* gm = gamma_slot >= 0 ? &self.parents[gamma_slot]->value : nullptr;
                double* gg = (gamma_slot >= 0 && self.parents[gamma_slot]->requires_grad)
                                 ? self.parents[gamma_slot]->grad_buffer().data()
                                 : nullptr;
                double* gb = (beta_slot >= 0 && self.parents[beta_slot]->requires_grad)
                                 ? self.parents[beta_slot]->grad_buffer().data()
                                 : nullptr;
                double* gx = px.requires_grad ? px.grad_buffer().data() : nullptr;
                std::vector<double> gxh(width);
                for (std::size_t r = 0; r < rows; ++r) {
                  const double* g = self.grad.data() + r * width;
                  const double* xh = xhat->data() + r * width;
                  double m1 = 0.0, m2 = 0.0;
                  for (std::size_t j = 0; j < width; ++j) {
                    gxh[j] = g[j] * (gm ? (*gm)[j] : 1.0);
                    m1 += gxh[j];
                    m2 += gxh[j] * xh[j];
                    if (gg) gg[j] += g[j] * xh[j];
                    if (gb) gb[j] += g[j];
                  }
                  if (!gx) continue;
                  m1 /= static_cast<double>(width);
                  m2 /= static_cast<double>(width);
                  const double inv = (*inv_std)[r];
                  for (std::size_t j = 0; j < width; ++j) {
                    gx[r * width + j] += inv * (gxh[j] - m1 - xh[j] * m2);
                  }
                }
              });
}

Var conv_time(const Var& x, const Var& w) {
  const Shape& sx = x.shape();
  const Shape& sw = w.shape();
  if (sx.size() < 3 || sw.size() != 3 || sw[1] != sx.back() || sw[0] % 2 == 0) {
    throw ShapeError("conv_time: input " + shape_str(sx) + " incompatible with kernel " +
                     shape_str(sw));
  }
  const std::size_t batch = sx[0];
  const std::size_t steps = sx[1];
  const std::size_t cin = sw[1];
  const std::size_t cout = sw[2];
  const std::size_t ksize = sw[0];
  const std::size_t per_step = shape_numel(sx) / (batch * steps * cin);  // spatial rows per step
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(ksize / 2);
  const std::ptrdiff_t T = static_cast<std::ptrdiff_t>(steps);
  Shape out_shape = sx;
  out_shape.back() = cout;
  Tensor out(out_shape);

  auto for_each_tap = [=](auto&& fn) {
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::ptrdiff_t i = -half; i <= half; ++i) {
        const std::ptrdiff_t t_lo = std::max<std::ptrdiff_t>(0, -i);
        const std::ptrdiff_t t_hi = std::min<std::ptrdiff_t>(T, T - i);
        if (t_hi <= t_lo) continue;
        const std::size_t rows = static_cast<std::size_t>(t_hi - t_lo) * per_step;
        const std::size_t out_row = (b * steps + static_cast<std::size_t>(t_lo)) * per_step;
        const std::size_t in_row = (b * steps + static_cast<std::size_t>(t_lo + i)) * per_step;
        fn(static_cast<std::size_t>(i + half), rows, in_row, out_row);
      }
    }
  };

  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  for_each_tap([&](std::size_t tap, std::size_t rows, std::size_t in_row, std::size_t out_row) {
    MatMap(out.data() + out_row * cout, rows, cout).noalias() +=
        ConstMatMap(xv.data() + in_row * cin, rows, cin) *
        ConstMatMap(wv.data() + tap * cin * cout, cin, cout);
  });
  return make("conv_time", std::move(out), {x.ptr(), w.ptr()}, [=](Node& self) {
    Node& px = *self.parents[0];
    Node& pw = *self.parents[1];
    double* gx = px.requires_grad ? px.grad_buffer().data() : nullptr;
    double* gw = pw.requires_grad ? pw.grad_buffer().data() : nullptr;
    for_each_tap([&](std::size_t tap, std::size_t rows, std::size_t in_row, std::size_t out_row) {
      ConstMatMap g(self.grad.data() + out_row * cout, rows, cout);
      if (gx) {
        MatMap(gx + in_row * cin, rows, cin).noalias() +=
            g * ConstMatMap(pw.value.data() + tap * cin * cout, cin, cout).transpose();
      }
      if (gw) {
        MatMap(gw + tap * cin * cout, cin, cout).noalias() +=
            ConstMatMap(px.value.data() + in_row * cin, rows, cin).transpose() * g;
      }
    });
  });
}

}  // namespace mcpst::ad
