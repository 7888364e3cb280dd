#pragma once

#include <cstddef>
#include <vector>

#include "mcpst/params.hpp"
#include "mcpst/rng.hpp"

namespace mcpst::sync {

struct SyncConfig {
  std::size_t k_steps = 10;
  double dt = 0.1;
  double gamma_lo = 0.1;
  double gamma_hi = 1.0;
};

struct PhaseState {
  ad::Var phases;    // B x N, wrapped into [0, 2pi)
  Tensor unwrapped;  // B x N, same increments without the wrap; not differentiated
  std::size_t step_index = 0;
};

void register_params(ParameterStore& store, Rng& rng, std::size_t width, std::size_t horizon);

/// w2 tanh(w1 F + b1): B x N x 1.
ad::Var estimate_frequencies(ParamBinding& bind, const ad::Var& features);
/// sigmoid(w2 relu(w1 F + b1) + b2): B x N x 1.
ad::Var estimate_local_coupling(ParamBinding& bind, const ad::Var& features);

/// phi0 = atan2(||f||, sum f) wrapped into [0, 2pi); atan2(0, 0) = 0.
PhaseState init_phases(const ad::Var& features);

/// Explicit Kuramoto steps
///   phi_k <- phi_k + dt (nu_k + g gl_k sum_j A_kj sin(phi_j - phi_k))  (mod 2pi)
/// with g = clip(gamma_global_raw). `nu` and `gamma_local` are B x N.
/// When `trace` is given, the wrapped phases after every step are appended.
PhaseState run_sync(PhaseState state, const Tensor& adjacency, const ad::Var& nu,
                    const ad::Var& gamma_local, const ad::Var& gamma_global_raw,
                    const SyncConfig& cfg, std::vector<Tensor>* trace = nullptr);

/// r = |mean exp(i phi)| per batch row: shape B.
ad::Var order_parameter(const ad::Var& phases);

struct SyncOutput {
  ad::Var v_sync;  // B x N x H
  ad::Var z_sync;  // B x N x (D + 2)
};

SyncOutput sync_predict(ParamBinding& bind, const ad::Var& features, const ad::Var& phases);

}  // namespace mcpst::sync
