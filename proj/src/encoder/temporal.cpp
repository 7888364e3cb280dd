// Multi-scale recurrent branch and spline upsampling.

#include <cmath>

#include "mcpst/encoder.hpp"

namespace mcpst::encoder {

using namespace mcpst::ad;

LstmState lstm_cell(const Var& x_t, const LstmState& prev, const Var& w, const Var& b,
                    std::size_t hidden) {
  const Var gates = linear(concat({prev.h, x_t}, x_t.rank() - 1), w, b);
  return lstm_gates(gates, prev.c, hidden);
}

LstmState lstm_gates(const Var& gates, const Var& c_prev, std::size_t hidden) {
  const std::size_t axis = gates.rank() - 1;
  const Var f = sigmoid(slice(gates, axis, 0, hidden));
  const Var i = sigmoid(slice(gates, axis, hidden, 2 * hidden));
  const Var g = tanh(slice(gates, axis, 2 * hidden, 3 * hidden));
  const Var o = sigmoid(slice(gates, axis, 3 * hidden, 4 * hidden));
  const Var c = f * c_prev + i * g;
  return {o * tanh(c), c};
}

Var run_lstm(ParamBinding& bind, const std::string& prefix, const Var& x, std::size_t hidden) {
  const Shape& s = x.shape();
  if (s.size() != 4) throw ShapeError("run_lstm expects B x T x N x C, got " + shape_str(s));
  const std::size_t batch = s[0], steps = s[1], nodes = s[2], channels = s[3];
  const Var w = bind(prefix + ".w");
  const Var b = bind(prefix + ".b");
  if (w.dim(0) != hidden + channels) {
    throw ShapeError(prefix + ": weight rows " + std::to_string(w.dim(0)) + " != h + C");
  }
  // Input contributions for all steps in one product; the recurrent part
  // uses the top h rows of the fused weight.
  const Var w_h = slice(w, 0, 0, hidden);
  const Var w_x = slice(w, 0, hidden, hidden + channels);
  const Var x_proj = linear(x, w_x, b);  // B x T x N x 4h

  LstmState st{constant(Tensor({batch, nodes, hidden})), constant(Tensor({batch, nodes, hidden}))};
  std::vector<Var> outputs;
  outputs.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    const Var xt = reshape(slice(x_proj, 1, t, t + 1), {batch, nodes, 4 * hidden});
    st = lstm_gates(xt + matmul(st.h, w_h), st.c, hidden);
    outputs.push_back(reshape(st.h, {batch, 1, nodes, hidden}));
  }
  return steps == 1 ? outputs.front() : concat(outputs, 1);
}

Var downsample(const Var& seq, std::size_t k) {
  if (k == 0) throw std::invalid_argument("downsample factor must be positive");
  if (k == 1) return seq;
  return slice(seq, 1, 0, seq.dim(1), k);
}

namespace {

// Values of the interpolant through (j * stride, y_j) at t = 0..target-1.
std::vector<double> interpolate(const std::vector<double>& y, std::size_t stride,
                                std::size_t target) {
  const std::size_t n = y.size();
  const double h = static_cast<double>(stride);
  std::vector<double> out(target);
  if (n == 1) {
    std::fill(out.begin(), out.end(), y[0]);
    return out;
  }
  // Second derivatives; all zero for the linear fallback.
  std::vector<double> m(n, 0.0);
  if (n >= 4) {
    const std::size_t inner = n - 2;
    std::vector<double> diag(inner, 4.0), rhs(inner);
    for (std::size_t i = 0; i < inner; ++i) {
      rhs[i] = 6.0 / (h * h) * (y[i] - 2.0 * y[i + 1] + y[i + 2]);
    }
    for (std::size_t i = 1; i < inner; ++i) {
      const double w = 1.0 / diag[i - 1];
      diag[i] -= w;
      rhs[i] -= w * rhs[i - 1];
    }
    m[inner] = rhs[inner - 1] / diag[inner - 1];
    for (std::size_t i = inner - 1; i-- > 0;) m[i + 1] = (rhs[i] - m[i + 2]) / diag[i];
  }
  const double last = static_cast<double>(n - 1) * h;
  const double end_slope = (y[n - 1] - y[n - 2]) / h + h * (2.0 * m[n - 1] + m[n - 2]) / 6.0;
  for (std::size_t t = 0; t < target; ++t) {
    const double x = static_cast<double>(t);
    if (x >= last) {
      out[t] = y[n - 1] + end_slope * (x - last);
      continue;
    }
    const std::size_t i = static_cast<std::size_t>(x / h);
    const double a = (static_cast<double>(i + 1) * h - x) / h;
    const double b = 1.0 - a;
    out[t] = a * y[i] + b * y[i + 1] +
             ((a * a * a - a) * m[i] + (b * b * b - b) * m[i + 1]) * h * h / 6.0;
  }
  return out;
}

}  // namespace

Tensor spline_matrix(std::size_t target, std::size_t knots, std::size_t stride) {
  if (knots == 0 || stride == 0) throw std::invalid_argument("spline needs knots and a stride");
  Tensor s({target, knots});
  std::vector<double> unit(knots, 0.0);
  for (std::size_t j = 0; j < knots; ++j) {
    unit[j] = 1.0;
    const auto col = interpolate(unit, stride, target);
    for (std::size_t t = 0; t < target; ++t) mat(s, t, j) = col[t];
    unit[j] = 0.0;
  }
  return s;
}

Var upsample_spline(const Var& seq, std::size_t target, std::size_t stride) {
  if (stride == 1 && seq.dim(1) == target) return seq;
  return mix_axis(spline_matrix(target, seq.dim(1), stride), seq, 1);
}

Var multiscale_encode(ParamBinding& bind, const Var& x, const EncoderConfig& cfg) {
  static const char* names[4] = {"enc.lstm_s", "enc.lstm_m", "enc.lstm_l", "enc.lstm_v"};
  const std::size_t steps = x.dim(1);
  std::vector<Var> branches;
  for (std::size_t i = 0; i < 4; ++i) {
    const std::size_t k = kScales[i];
    const Var h = run_lstm(bind, names[i], downsample(x, k), cfg.hidden);
    branches.push_back(upsample_spline(h, steps, k));
  }
  return concat(branches, 3);
}

Tensor positional_encoding(std::size_t steps, std::size_t width) {
  Tensor p({steps, width});
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t c = 0; c < width; ++c) {
      const std::size_t pair = c / 2;
      const double freq =
          std::pow(10000.0, static_cast<double>(2 * pair) / static_cast<double>(width));
      const double angle = static_cast<double>(t) / freq;
      mat(p, t, c) = (c % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return p;
}

}  // namespace mcpst::encoder
