#include "mcpst/specengine.hpp"

#include "mcpst/layers.hpp"

namespace mcpst::spectral {

using namespace mcpst::ad;

void register_params(ParameterStore& store, Rng& rng, std::size_t k_retained, std::size_t width,
                     std::size_t horizon) {
  layers::add_dense(store, rng, "spec.s1", k_retained, width);
  layers::add_dense(store, rng, "spec.s2", width, width / 4, false);
  layers::add_dense(store, rng, "spec.in", k_retained + 1, width);
  layers::add_dense(store, rng, "spec.flow", width, horizon, false);
}

namespace {

Var broadcast_batch(const Var& per_node, std::size_t batch) {
  const Shape& s = per_node.shape();
  return expand(reshape(per_node, {1, s[0], s[1]}), {batch, s[0], s[1]});
}

}  // namespace

SpectralFeatures spectral_features(ParamBinding& bind, const graph::SpectralBasis& basis,
                                   std::size_t batch) {
  const Var psi = constant(basis.retained());
  const Var f = layers::dense(bind, "spec.s2", relu(layers::dense(bind, "spec.s1", psi)), false);
  return {broadcast_batch(f, batch), basis.gap};
}

Var spectral_predict(ParamBinding& bind, const graph::SpectralBasis& basis, std::size_t batch) {
  const Tensor psi = basis.retained();
  const std::size_t n = psi.dim(0);
  const std::size_t k = psi.dim(1);
  Tensor in({n, k + 1});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < k; ++c) mat(in, i, c) = mat(psi, i, c);
    mat(in, i, k) = basis.gap;
  }
  const Var hidden = relu(layers::dense(bind, "spec.in", constant(std::move(in))));
  return broadcast_batch(layers::dense(bind, "spec.flow", hidden, false), batch);
}

}  // namespace mcpst::spectral
