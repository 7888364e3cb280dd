#include "mcpst/predict.hpp"

#include <cmath>
#include <string>

#include "mcpst/layers.hpp"

namespace mcpst::predict {

using namespace mcpst::ad;

namespace {

struct Head {
  const char* name;
  std::size_t depth;
};
constexpr Head kHeads[3] = {{"head.s", 2}, {"head.m", 3}, {"head.l", 3}};

std::size_t span_of(const HorizonSplit& s, std::size_t i) {
  return i == 0 ? s.short_len : (i == 1 ? s.medium_len : s.long_len);
}

}  // namespace

HorizonSplit split_horizon(std::size_t horizon) {
  if (horizon < 3) {
    throw std::invalid_argument("horizon must be at least 3 to form short/medium/long heads");
  }
  HorizonSplit s;
  s.short_len = std::max<std::size_t>(1, horizon / 4);
  s.medium_len = std::max<std::size_t>(1, horizon / 4);
  s.long_len = horizon - s.short_len - s.medium_len;
  return s;
}

void register_params(ParameterStore& store, Rng& rng, std::size_t width, std::size_t horizon) {
  const HorizonSplit split = split_horizon(horizon);
  for (std::size_t h = 0; h < 3; ++h) {
    const std::string p = kHeads[h].name;
    for (std::size_t layer = 1; layer <= kHeads[h].depth; ++layer) {
      layers::add_dense(store, rng, p + std::to_string(layer), width, width);
      if (layer < kHeads[h].depth) layers::add_layer_norm(store, p + "_ln" + std::to_string(layer), width);
    }
    const std::size_t out = span_of(split, h);
    layers::add_dense(store, rng, p + "_final", width, out);
    layers::add_dense(store, rng, p + "_u1", width, width);
    layers::add_dense(store, rng, p + "_u2", width, out, false);
  }
  layers::add_scalar(store, "predict.consensus_raw", -2.0);
}

HeadOutput horizon_heads(ParamBinding& bind, const Var& f_fused, std::size_t horizon) {
  split_horizon(horizon);
  std::vector<Var> means, variances;
  for (const Head& head : kHeads) {
    const std::string p = head.name;
    // GELU(W_k LN(...GELU(W_1 F + b_1)...) + b_k): a layer norm between consecutive layers.
    Var f = gelu(layers::dense(bind, p + "1", f_fused));
    for (std::size_t layer = 2; layer <= head.depth; ++layer) {
      f = layers::layer_norm(bind, p + "_ln" + std::to_string(layer - 1), f);
      f = gelu(layers::dense(bind, p + std::to_string(layer), f));
    }
    means.push_back(layers::dense(bind, p + "_final", f));
    variances.push_back(softplus(
        layers::dense(bind, p + "_u2", gelu(layers::dense(bind, p + "_u1", f)), false)));
  }
  return {concat(means, 2), concat(variances, 2)};
}

Var neural_consensus(const Var& y_model, const Var& v_diff, const Var& v_sync, const Var& v_spec,
                     const Var& alpha, const Var& beta_raw) {
  const Var blend = slice(alpha, 2, 0, 1) * v_diff + slice(alpha, 2, 1, 2) * v_sync +
                    slice(alpha, 2, 2, 3) * v_spec;
  const Var beta_c = sigmoid(beta_raw);
  return y_model + beta_c * (blend - y_model);
}

Var task_loss(const Var& y_hat, const Var& sigma2, const Var& target, double eta, bool nll) {
  if (y_hat.shape() != target.shape() || sigma2.shape() != target.shape()) {
    throw ShapeError("task_loss: prediction " + shape_str(y_hat.shape()) + ", variance " +
                     shape_str(sigma2.shape()) + " and target " + shape_str(target.shape()) +
                     " must agree");
  }
  const Var sq = square(target - y_hat);
  if (nll) return scale(mean_all(log(sigma2) + sq / sigma2), 0.5);
  return mean_all(sq) + scale(mean_all(sigma2), eta);
}

namespace {

// -sum p log p over the last axis, keeping a trailing unit axis dropped.
Var entropy_last(const Var& p) { return neg(sum(p * log(p), p.rank() - 1)); }

}  // namespace

Var js_divergence(const Var& v_diff, const Var& v_sync, const Var& v_spec) {
  const Var p1 = softmax_last(v_diff);
  const Var p2 = softmax_last(v_sync);
  const Var p3 = softmax_last(v_spec);
  const Var mix = scale(p1 + p2 + p3, 1.0 / 3.0);
  const Var mean_entropy =
      scale(entropy_last(p1) + entropy_last(p2) + entropy_last(p3), 1.0 / 3.0);
  return mean_all(entropy_last(mix) - mean_entropy);
}

double js_divergence(std::span<const double> p1, std::span<const double> p2,
                     std::span<const double> p3) {
  if (p1.size() != p2.size() || p1.size() != p3.size()) {
    throw std::invalid_argument("js_divergence: distributions differ in length");
  }
  auto plogp = [](double p) { return p > 0.0 ? p * std::log(p) : 0.0; };
  double h_mix = 0.0, h_each = 0.0;
  for (std::size_t i = 0; i < p1.size(); ++i) {
    h_mix -= plogp((p1[i] + p2[i] + p3[i]) / 3.0);
    h_each -= (plogp(p1[i]) + plogp(p2[i]) + plogp(p3[i])) / 3.0;
  }
  return h_mix - h_each;
}

Var simplex_penalty(const Var& alpha) {
  return mean_all(square(add_scalar(sum(alpha, alpha.rank() - 1), -1.0)));
}

PhaseLoss phase_loss(const Var& alpha, const Var& v_diff, const Var& v_sync, const Var& v_spec,
                     double beta) {
  PhaseLoss out;
  out.simplex = simplex_penalty(alpha);
  out.js = js_divergence(v_diff, v_sync, v_spec);
  out.total = out.simplex + scale(out.js, beta);
  return out;
}

LossBreakdown total_loss(double task, double phase, double meta, double lambda1, double lambda2) {
  LossBreakdown b;
  b.task = task;
  b.phase = phase;
  b.meta = meta;
  b.total = task + lambda1 * phase + lambda2 * meta;
  return b;
}

std::vector<MetricRow> metrics(const Tensor& y_hat, const Tensor& y,
                               std::span<const std::size_t> steps, double interval_minutes) {
  if (y_hat.shape() != y.shape() || y.rank() == 0) {
    throw ShapeError("metrics: prediction " + shape_str(y_hat.shape()) + " vs target " +
                     shape_str(y.shape()));
  }
  const std::size_t horizon = y.shape().back();
  const std::size_t rows = y.size() / horizon;
  std::vector<MetricRow> out;
  for (std::size_t step : steps) {
    if (step == 0 || step > horizon) {
      throw std::invalid_argument("metric step " + std::to_string(step) + " outside 1.." +
                                  std::to_string(horizon));
    }
    double abs_sum = 0.0, sq_sum = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
      const double e = y_hat[r * horizon + step - 1] - y[r * horizon + step - 1];
      abs_sum += std::abs(e);
      sq_sum += e * e;
    }
    MetricRow row;
    row.step = step;
    row.minutes = interval_minutes * static_cast<double>(step);
    row.mae = abs_sum / static_cast<double>(rows);
    row.rmse = std::sqrt(sq_sum / static_cast<double>(rows));
    out.push_back(row);
  }
  return out;
}

}  // namespace mcpst::predict
