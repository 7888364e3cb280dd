#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mcpst/params.hpp"
#include "mcpst/rng.hpp"

namespace mcpst::predict {

/// Short and medium spans take H/4 steps each (at least 1); long takes the rest.
struct HorizonSplit {
  std::size_t short_len = 0;
  std::size_t medium_len = 0;
  std::size_t long_len = 0;
};
HorizonSplit split_horizon(std::size_t horizon);

void register_params(ParameterStore& store, Rng& rng, std::size_t width, std::size_t horizon);

struct HeadOutput {
  ad::Var y_hat;   // B x N x H
  ad::Var sigma2;  // B x N x H, strictly positive
};

HeadOutput horizon_heads(ParamBinding& bind, const ad::Var& f_fused, std::size_t horizon);

/// (1 - beta_c) y_model + beta_c sum_i alpha_i v_i, beta_c = sigmoid(raw).
ad::Var neural_consensus(const ad::Var& y_model, const ad::Var& v_diff, const ad::Var& v_sync,
                         const ad::Var& v_spec, const ad::Var& alpha, const ad::Var& beta_raw);

/// mean((y - y_hat)^2) + eta mean(sigma2); with `nll`, the Gaussian negative
/// log-likelihood 0.5 mean(log sigma2 + (y - y_hat)^2 / sigma2) instead.
ad::Var task_loss(const ad::Var& y_hat, const ad::Var& sigma2, const ad::Var& target, double eta,
                  bool nll = false);

/// Jensen-Shannon divergence of the three predictions after a softmax over
/// the horizon axis, natural log, averaged over (B, N).
ad::Var js_divergence(const ad::Var& v_diff, const ad::Var& v_sync, const ad::Var& v_spec);

/// JS divergence of three explicit distributions (0 log 0 = 0).
double js_divergence(std::span<const double> p1, std::span<const double> p2,
                     std::span<const double> p3);

/// mean((sum alpha - 1)^2).
ad::Var simplex_penalty(const ad::Var& alpha);

struct PhaseLoss {
  ad::Var total;
  ad::Var simplex;
  ad::Var js;
};
PhaseLoss phase_loss(const ad::Var& alpha, const ad::Var& v_diff, const ad::Var& v_sync,
                     const ad::Var& v_spec, double beta);

struct LossBreakdown {
  double task = 0.0;
  double phase = 0.0;
  double meta = 0.0;
  double total = 0.0;
  double js = 0.0;
  double simplex_penalty = 0.0;
};
LossBreakdown total_loss(double task, double phase, double meta, double lambda1, double lambda2);

struct MetricRow {
  std::size_t step = 0;
  double minutes = 0.0;
  double mae = 0.0;
  double rmse = 0.0;
};

/// Per-step MAE/RMSE over all leading entries of y_hat, y shaped [..., H].
/// Steps are 1-based.
std::vector<MetricRow> metrics(const Tensor& y_hat, const Tensor& y,
                               std::span<const std::size_t> steps, double interval_minutes);

}  // namespace mcpst::predict
