#include "mcpst/layers.hpp"

#include <cmath>

namespace mcpst::layers {

Parameter& add_weight(ParameterStore& store, Rng& rng, const std::string& name, std::size_t fan_in,
                      std::size_t fan_out) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor w({fan_in, fan_out});
  for (double& v : w.values()) v = rng.uniform(-limit, limit);
  return store.add(name, std::move(w));
}

Parameter& add_zeros(ParameterStore& store, const std::string& name, Shape shape) {
  return store.add(name, Tensor(std::move(shape)));
}

Parameter& add_scalar(ParameterStore& store, const std::string& name, double value) {
  return store.add(name, Tensor::scalar(value));
}

void add_dense(ParameterStore& store, Rng& rng, const std::string& prefix, std::size_t in,
               std::size_t out, bool bias) {
  add_weight(store, rng, prefix + ".w", in, out);
  if (bias) add_zeros(store, prefix + ".b", {out});
}

ad::Var dense(ParamBinding& bind, const std::string& prefix, const ad::Var& x, bool bias) {
  return ad::linear(x, bind(prefix + ".w"), bias ? bind(prefix + ".b") : ad::Var());
}

void add_layer_norm(ParameterStore& store, const std::string& prefix, std::size_t width) {
  store.add(prefix + ".gamma", Tensor({width}, 1.0));
  store.add(prefix + ".beta", Tensor({width}));
}

ad::Var layer_norm(ParamBinding& bind, const std::string& prefix, const ad::Var& x) {
  return ad::layer_norm_last(x, bind(prefix + ".gamma"), bind(prefix + ".beta"));
}

}  // namespace mcpst::layers
