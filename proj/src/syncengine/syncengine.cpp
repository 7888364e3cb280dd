#include "mcpst/syncengine.hpp"

#include <cmath>

#include "mcpst/layers.hpp"

namespace mcpst::sync {

using namespace mcpst::ad;

void register_params(ParameterStore& store, Rng& rng, std::size_t width, std::size_t horizon) {
  layers::add_dense(store, rng, "sync.nu1", width, width);
  layers::add_dense(store, rng, "sync.nu2", width, 1, false);
  layers::add_dense(store, rng, "sync.gl1", width, width);
  layers::add_dense(store, rng, "sync.gl2", width, 1);
  layers::add_scalar(store, "sync.gamma_global_raw", 0.5);
  layers::add_dense(store, rng, "sync.p", width + 2, width);
  layers::add_dense(store, rng, "sync.phase", width, horizon, false);
}

Var estimate_frequencies(ParamBinding& bind, const Var& features) {
  return layers::dense(bind, "sync.nu2", tanh(layers::dense(bind, "sync.nu1", features)), false);
}

Var estimate_local_coupling(ParamBinding& bind, const Var& features) {
  return sigmoid(layers::dense(bind, "sync.gl2", relu(layers::dense(bind, "sync.gl1", features))));
}

PhaseState init_phases(const Var& features) {
  if (features.rank() != 3) throw ShapeError("init_phases expects B x N x D features");
  const Var norm = sqrt(sum(square(features), 2));
  const Var total = sum(features, 2);
  PhaseState st;
  st.phases = mod_2pi(atan2(norm, total));
  st.unwrapped = st.phases.value();
  return st;
}

PhaseState run_sync(PhaseState state, const Tensor& adjacency, const Var& nu, const Var& gamma_local,
                    const Var& gamma_global_raw, const SyncConfig& cfg, std::vector<Tensor>* trace) {
  const Shape& ps = state.phases.shape();
  if (nu.shape() != ps || gamma_local.shape() != ps) {
    throw ShapeError("run_sync: nu " + shape_str(nu.shape()) + " / gamma_local " +
                     shape_str(gamma_local.shape()) + " must match phases " + shape_str(ps));
  }
  const Var coupling = clip(gamma_global_raw, cfg.gamma_lo, cfg.gamma_hi) * gamma_local;
  for (std::size_t k = 0; k < cfg.k_steps; ++k) {
    const Var s = sin(state.phases);
    const Var c = cos(state.phases);
    // sum_j A_kj sin(phi_j - phi_k) = cos(phi_k) (A sin phi)_k - sin(phi_k) (A cos phi)_k
    const Var pull = c * mix_axis(adjacency, s, 1) - s * mix_axis(adjacency, c, 1);
    const Var increment = scale(nu + coupling * pull, cfg.dt);
    for (std::size_t i = 0; i < state.unwrapped.size(); ++i) {
      state.unwrapped[i] += increment.value()[i];
    }
    state.phases = mod_2pi(state.phases + increment);
    ++state.step_index;
    if (trace) trace->push_back(state.phases.value());
  }
  return state;
}

Var order_parameter(const Var& phases) {
  const Var re = mean(cos(phases), 1);
  const Var im = mean(sin(phases), 1);
  return sqrt(square(re) + square(im));
}

SyncOutput sync_predict(ParamBinding& bind, const Var& features, const Var& phases) {
  const Shape& ps = phases.shape();
  const Shape col{ps[0], ps[1], 1};
  SyncOutput out;
  out.z_sync = concat({features, reshape(cos(phases), col), reshape(sin(phases), col)}, 2);
  out.v_sync =
      layers::dense(bind, "sync.phase", relu(layers::dense(bind, "sync.p", out.z_sync)), false);
  return out;
}

}  // namespace mcpst::sync
