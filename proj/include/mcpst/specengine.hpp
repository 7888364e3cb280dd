#pragma once

#include <cstddef>

#include "mcpst/graphcore.hpp"
#include "mcpst/params.hpp"
#include "mcpst/rng.hpp"

namespace mcpst::spectral {

void register_params(ParameterStore& store, Rng& rng, std::size_t k_retained, std::size_t width,
                     std::size_t horizon);

struct SpectralFeatures {
  ad::Var f_spec;  // B x N x (width / 4)
  double gap = 0.0;
};

/// w2 relu(w1 psi_row + b1) per node, identical for every batch entry.
SpectralFeatures spectral_features(ParamBinding& bind, const graph::SpectralBasis& basis,
                                   std::size_t batch);

/// flow(relu(w [psi_row, gap] + b)) per node: B x N x H.
ad::Var spectral_predict(ParamBinding& bind, const graph::SpectralBasis& basis, std::size_t batch);

}  // namespace mcpst::spectral
