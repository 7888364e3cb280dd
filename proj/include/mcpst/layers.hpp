#pragma once

#include <cstddef>
#include <string>

#include "mcpst/params.hpp"
#include "mcpst/rng.hpp"

namespace mcpst::layers {

/// Xavier-uniform weight of shape fan_in x fan_out (or `shape` when given).
Parameter& add_weight(ParameterStore& store, Rng& rng, const std::string& name, std::size_t fan_in,
                      std::size_t fan_out);
Parameter& add_zeros(ParameterStore& store, const std::string& name, Shape shape);
Parameter& add_scalar(ParameterStore& store, const std::string& name, double value);

/// Registers `<prefix>.w` and, when `bias`, `<prefix>.b`.
void add_dense(ParameterStore& store, Rng& rng, const std::string& prefix, std::size_t in,
               std::size_t out, bool bias = true);
ad::Var dense(ParamBinding& bind, const std::string& prefix, const ad::Var& x, bool bias = true);

/// Registers `<prefix>.gamma` (ones) and `<prefix>.beta` (zeros).
void add_layer_norm(ParameterStore& store, const std::string& prefix, std::size_t width);
ad::Var layer_norm(ParamBinding& bind, const std::string& prefix, const ad::Var& x);

}  // namespace mcpst::layers
