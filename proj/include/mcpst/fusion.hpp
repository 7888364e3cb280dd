#pragma once

#include <cstddef>

#include "mcpst/params.hpp"
#include "mcpst/rng.hpp"

namespace mcpst::fusion {

/// Width of [T_K, Z_sync, F_spec] for feature width D.
constexpr std::size_t total_width(std::size_t width) { return width + (width + 2) + width / 4; }

struct PhaseBundle {
  ad::Var f_diff;  // B x N x D
  ad::Var f_sync;  // B x N x (D + 2)
  ad::Var f_spec;  // B x N x (D / 4)
  ad::Var v_diff;  // B x N x H
  ad::Var v_sync;
  ad::Var v_spec;

  ad::Var concatenated() const;
};

void register_params(ParameterStore& store, Rng& rng, std::size_t width);

/// softmax(w2 relu(w1 F_cat + b1) + b2): B x N x 3, ordered (diffusion, sync, spectral).
ad::Var attention_weights(ParamBinding& bind, const ad::Var& f_cat);

/// sum_i alpha_i P_i(F_i) where P_i projects block i to the concatenated width.
ad::Var weighted_combine(ParamBinding& bind, const PhaseBundle& bundle, const ad::Var& alpha);

/// w_fuse2 relu(w_fuse1 weighted + b) + T_K.
ad::Var residual_fuse(ParamBinding& bind, const ad::Var& weighted, const ad::Var& t_final);

}  // namespace mcpst::fusion
