#pragma once

#include <cstddef>

#include "mcpst/graphcore.hpp"
#include "mcpst/params.hpp"
#include "mcpst/rng.hpp"

namespace mcpst::diffusion {

struct DiffusionConfig {
  std::size_t k_steps = 6;
  double total_time = 0.1;
  double kappa_lo = 0.01;
  double kappa_hi = 0.3;
  double capacity_lo = 0.5;
  double capacity_hi = 2.0;

  double dt() const { return total_time / static_cast<double>(k_steps); }
};

struct DiffusionState {
  ad::Var t_state;  // B x N x D
  std::size_t step_index = 0;
};

/// Throws std::invalid_argument when dt * kappa_hi * (2 * max_degree) / capacity_lo >= 2.
void check_stability(const DiffusionConfig& cfg, double max_degree);

/// Registers the "diff.*" parameters for feature width `width` and horizon `horizon`.
void register_params(ParameterStore& store, Rng& rng, std::size_t width, std::size_t horizon);

/// sigmoid(w2 relu(w1 F + b1) + b2): B x N x 1, one source weight per node.
ad::Var estimate_sources(ParamBinding& bind, const ad::Var& features);

/// T0 = F scaled per node by its source value.
DiffusionState init_state(const ad::Var& features, const ad::Var& sources);

/// K explicit Euler heat steps T <- T - (dt kappa / C) L T with
/// kappa = clip(kappa_raw), C = clip(capacity_raw).
DiffusionState run_diffusion(DiffusionState state, const Tensor& lap_comb, const ad::Var& kappa_raw,
                             const ad::Var& capacity_raw, const DiffusionConfig& cfg);

/// w_flow relu(w_f T + b_f): B x N x H.
ad::Var diffusion_predict(ParamBinding& bind, const DiffusionState& state);

}  // namespace mcpst::diffusion
