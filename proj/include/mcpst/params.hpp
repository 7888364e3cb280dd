#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mcpst/autodiff.hpp"
#include "mcpst/tensor.hpp"

namespace mcpst {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;
};

/// Ordered collection of named parameters. Copying yields an independent
/// snapshot, which is how checkpoints and adapted copies are made.
class ParameterStore {
 public:
  Parameter& add(std::string name, Tensor value, bool trainable = true);

  bool contains(std::string_view name) const;
  Parameter& get(std::string_view name);
  const Parameter& get(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;

  std::vector<Parameter>& all() noexcept { return params_; }
  const std::vector<Parameter>& all() const noexcept { return params_; }
  std::size_t size() const noexcept { return params_.size(); }
  std::size_t scalar_count(bool trainable_only = true) const;

  void zero_grad();
  /// Copies values (not grads) from `other`; names and shapes must match.
  void assign_values(const ParameterStore& other);

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Binds parameters as graph leaves for one forward pass. Each parameter is
/// bound at most once so repeated uses share a leaf and a gradient.
class ParamBinding {
 public:
  explicit ParamBinding(ParameterStore& store, bool track_grad = true);

  ad::Var operator()(std::string_view name);
  ParameterStore& store() noexcept { return store_; }

  /// Adds the leaf gradients gathered by ad::backward into the store.
  void accumulate_grads();

 private:
  ParameterStore& store_;
  bool track_grad_;
  std::vector<ad::Var> leaves_;
};

}  // namespace mcpst
