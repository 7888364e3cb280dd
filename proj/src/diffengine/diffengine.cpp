#include "mcpst/diffengine.hpp"

#include <sstream>

#include "mcpst/layers.hpp"

namespace mcpst::diffusion {

using namespace mcpst::ad;

void check_stability(const DiffusionConfig& cfg, double max_degree) {
  if (cfg.k_steps == 0) throw std::invalid_argument("diffusion needs at least one step");
  const double lambda_bound = 2.0 * max_degree;
  const double rate = cfg.dt() * cfg.kappa_hi * lambda_bound / cfg.capacity_lo;
  if (rate >= 2.0) {
    std::ostringstream os;
    os << "diffusion step unstable: dt * kappa_max * lambda_max / C_min = " << rate
       << " >= 2; need dt < " << 2.0 * cfg.capacity_lo / (cfg.kappa_hi * lambda_bound)
       << " (more diffusion steps or smaller edge weights)";
    throw std::invalid_argument(os.str());
  }
}

void register_params(ParameterStore& store, Rng& rng, std::size_t width, std::size_t horizon) {
  layers::add_dense(store, rng, "diff.q1", width, width);
  layers::add_dense(store, rng, "diff.q2", width, 1);
  layers::add_scalar(store, "diff.kappa_raw", 0.1);
  layers::add_scalar(store, "diff.capacity_raw", 1.0);
  layers::add_dense(store, rng, "diff.f", width, width);
  layers::add_dense(store, rng, "diff.flow", width, horizon, false);
}

Var estimate_sources(ParamBinding& bind, const Var& features) {
  return sigmoid(layers::dense(bind, "diff.q2", relu(layers::dense(bind, "diff.q1", features))));
}

DiffusionState init_state(const Var& features, const Var& sources) {
  const Shape& f = features.shape();
  const Shape& s = sources.shape();
  if (f.size() != 3 || s.size() != 3 || s[0] != f[0] || s[1] != f[1] || s[2] != 1) {
    throw ShapeError("init_state: sources " + shape_str(s) + " do not match features " +
                     shape_str(f));
  }
  return {features * sources, 0};
}

DiffusionState run_diffusion(DiffusionState state, const Tensor& lap_comb, const Var& kappa_raw,
                             const Var& capacity_raw, const DiffusionConfig& cfg) {
  const Var kappa = clip(kappa_raw, cfg.kappa_lo, cfg.kappa_hi);
  const Var capacity = clip(capacity_raw, cfg.capacity_lo, cfg.capacity_hi);
  const Var rate = scale(kappa / capacity, cfg.dt());
  for (std::size_t k = 0; k < cfg.k_steps; ++k) {
    state.t_state = state.t_state - rate * mix_axis(lap_comb, state.t_state, 1);
    ++state.step_index;
  }
  return state;
}

Var diffusion_predict(ParamBinding& bind, const DiffusionState& state) {
  return layers::dense(bind, "diff.flow", relu(layers::dense(bind, "diff.f", state.t_state)), false);
}

}  // namespace mcpst::diffusion
