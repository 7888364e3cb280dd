#pragma once

// Reverse-mode differentiation over dense tensors.
//
// Every operation records a node holding its value, its parents and a
// backward closure. `backward(loss)` walks the recorded graph in reverse
// topological order and accumulates adjoints into every node that requires a
// gradient. Values are checked for NaN/Inf as they are produced; the error
// names the operation that produced the first non-finite entry.

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "mcpst/tensor.hpp"

namespace mcpst::ad {

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;
  bool requires_grad = false;
  const char* op = "leaf";

  Tensor& grad_buffer();
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Tensor& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t dim(std::size_t axis) const { return node_->value.dim(axis); }
  std::size_t rank() const { return node_->value.rank(); }
  double item() const { return node_->value.item(); }
  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }

  /// Gradient after backward(); zero tensor if nothing flowed here.
  Tensor grad() const;

  Node* node() const noexcept { return node_.get(); }
  const std::shared_ptr<Node>& ptr() const noexcept { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// While alive, records the branch taken by every element of the piecewise
/// operations (relu, clip, mod_2pi, atan2) evaluated on this thread. Two
/// evaluations with equal traces lie on the same smooth piece.
class BranchTrace {
 public:
  BranchTrace();
  ~BranchTrace();
  BranchTrace(const BranchTrace&) = delete;
  BranchTrace& operator=(const BranchTrace&) = delete;

  const std::vector<long long>& codes() const noexcept { return codes_; }
  void record(long long code) { codes_.push_back(code); }
  static BranchTrace* active() noexcept;

 private:
  std::vector<long long> codes_;
  BranchTrace* previous_;
};

Var constant(Tensor value);
Var leaf(Tensor value, bool requires_grad = true);

/// Seeds d(loss)/d(loss) = 1 and propagates. `loss` must hold one element.
void backward(const Var& loss);

// --- elementwise arithmetic (numpy-style broadcasting) ---------------------
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var scale(const Var& a, double c);
Var add_scalar(const Var& a, double c);
Var neg(const Var& a);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator/(const Var& a, const Var& b) { return div(a, b); }
inline Var operator*(double c, const Var& a) { return scale(a, c); }
inline Var operator*(const Var& a, double c) { return scale(a, c); }
inline Var operator-(const Var& a) { return neg(a); }

/// Broadcast `a` to `shape` (numpy rules).
Var expand(const Var& a, const Shape& shape);

// --- unary maps -------------------------------------------------------------
Var exp(const Var& a);
Var log(const Var& a);
Var sin(const Var& a);
Var cos(const Var& a);
Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var relu(const Var& a);
Var gelu(const Var& a);  // x * Phi(x), exact erf form
Var softplus(const Var& a);
Var sqrt(const Var& a);  // zero gradient at 0
Var square(const Var& a);

/// Clamp to [lo, hi]. Gradient passes only strictly inside (lo, hi).
Var clip(const Var& a, double lo, double hi);
/// Wrap into [0, 2*pi); gradient treated as identity.
Var mod_2pi(const Var& a);
/// Elementwise atan2(y, x); atan2(0, 0) = 0 with zero gradient.
Var atan2(const Var& y, const Var& x);

// --- linear algebra ---------------------------------------------------------
/// a[..., k] x w[k, n] -> [..., n]
Var matmul(const Var& a, const Var& w);
/// matmul plus bias b[n]; `b` may be undefined.
Var linear(const Var& x, const Var& w, const Var& b);
/// Batched product over identical leading dims:
/// a[..., m, k] x b[..., k, n], or b[..., n, k] when transpose_b.
Var bmm(const Var& a, const Var& b, bool transpose_b = false);
/// out[..., i, ...] = sum_j m[i, j] * x[..., j, ...] along `axis`; m is constant.
Var mix_axis(const Tensor& m, const Var& x, std::size_t axis);

// --- structure --------------------------------------------------------------
Var reshape(const Var& a, const Shape& shape);
Var permute(const Var& a, const std::vector<std::size_t>& perm);
Var concat(const std::vector<Var>& parts, std::size_t axis);
Var slice(const Var& a, std::size_t axis, std::size_t start, std::size_t stop,
          std::size_t step = 1);

// --- reductions -------------------------------------------------------------
Var sum(const Var& a, std::size_t axis, bool keepdim = false);
Var mean(const Var& a, std::size_t axis, bool keepdim = false);
Var sum_all(const Var& a);
Var mean_all(const Var& a);

// --- normalisation ----------------------------------------------------------
Var softmax_last(const Var& a);
/// Layer norm over the last axis with variance floor eps; gamma/beta may be undefined.
Var layer_norm_last(const Var& a, const Var& gamma, const Var& beta, double eps = 1e-5);

/// 1-D convolution along axis 1 of x[B, T, ..., Cin] with w[k, Cin, Cout],
/// zero padding floor(k/2), odd k. Output keeps T.
Var conv_time(const Var& x, const Var& w);

}  // namespace mcpst::ad
