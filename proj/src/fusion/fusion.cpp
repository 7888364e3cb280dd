#include "mcpst/fusion.hpp"

#include "mcpst/layers.hpp"

namespace mcpst::fusion {

using namespace mcpst::ad;

Var PhaseBundle::concatenated() const { return concat({f_diff, f_sync, f_spec}, 2); }

void register_params(ParameterStore& store, Rng& rng, std::size_t width) {
  const std::size_t dt = total_width(width);
  layers::add_dense(store, rng, "fusion.alpha1", dt, width);
  layers::add_dense(store, rng, "fusion.alpha2", width, 3);
  layers::add_dense(store, rng, "fusion.proj_diff", width, dt);
  layers::add_dense(store, rng, "fusion.proj_sync", width + 2, dt);
  layers::add_dense(store, rng, "fusion.proj_spec", width / 4, dt);
  layers::add_dense(store, rng, "fusion.fuse1", dt, width);
  layers::add_dense(store, rng, "fusion.fuse2", width, width, false);
}

Var attention_weights(ParamBinding& bind, const Var& f_cat) {
  const Var hidden = relu(layers::dense(bind, "fusion.alpha1", f_cat));
  return softmax_last(layers::dense(bind, "fusion.alpha2", hidden));
}

Var weighted_combine(ParamBinding& bind, const PhaseBundle& bundle, const Var& alpha) {
  const Var blocks[3] = {layers::dense(bind, "fusion.proj_diff", bundle.f_diff),
                         layers::dense(bind, "fusion.proj_sync", bundle.f_sync),
                         layers::dense(bind, "fusion.proj_spec", bundle.f_spec)};
  Var out;
  for (std::size_t i = 0; i < 3; ++i) {
    const Var term = slice(alpha, 2, i, i + 1) * blocks[i];
    out = out.defined() ? out + term : term;
  }
  return out;
}

Var residual_fuse(ParamBinding& bind, const Var& weighted, const Var& t_final) {
  const Var hidden = relu(layers::dense(bind, "fusion.fuse1", weighted));
  return layers::dense(bind, "fusion.fuse2", hidden, false) + t_final;
}

}  // namespace mcpst::fusion
