#include "mcpst/params.hpp"

#include <stdexcept>

namespace mcpst {

Parameter& ParameterStore::add(std::string name, Tensor value, bool trainable) {
  if (index_.contains(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
  index_.emplace(name, params_.size());
  Tensor grad(value.shape());
  params_.push_back(Parameter{std::move(name), std::move(value), std::move(grad), trainable});
  return params_.back();
}

bool ParameterStore::contains(std::string_view name) const {
  return index_.contains(std::string(name));
}

std::size_t ParameterStore::index_of(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw std::out_of_range("unknown parameter '" + std::string(name) + "'");
  return it->second;
}

Parameter& ParameterStore::get(std::string_view name) { return params_[index_of(name)]; }

const Parameter& ParameterStore::get(std::string_view name) const {
  return params_[index_of(name)];
}

std::size_t ParameterStore::scalar_count(bool trainable_only) const {
  std::size_t n = 0;
  for (const auto& p : params_) {
    if (!trainable_only || p.trainable) n += p.value.size();
  }
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.grad.fill(0.0);
}

void ParameterStore::assign_values(const ParameterStore& other) {
  if (other.size() != size()) throw std::invalid_argument("parameter sets differ in size");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Parameter& src = other.params_[i];
    Parameter& dst = params_[i];
    if (src.name != dst.name || src.value.shape() != dst.value.shape()) {
      throw std::invalid_argument("parameter mismatch at '" + dst.name + "'");
    }
    dst.value = src.value;
  }
}

ParamBinding::ParamBinding(ParameterStore& store, bool track_grad)
    : store_(store), track_grad_(track_grad), leaves_(store.size()) {}

ad::Var ParamBinding::operator()(std::string_view name) {
  const std::size_t i = store_.index_of(name);
  if (!leaves_[i].defined()) {
    const Parameter& p = store_.all()[i];
    leaves_[i] = ad::leaf(p.value, track_grad_ && p.trainable);
  }
  return leaves_[i];
}

void ParamBinding::accumulate_grads() {
  auto& params = store_.all();
  for (std::size_t i = 0; i < leaves_.size(); ++i) {
    const ad::Var& v = leaves_[i];
    if (!v.defined() || !v.requires_grad() || v.node()->grad.empty()) continue;
    Tensor& g = params[i].grad;
    const Tensor& lg = v.node()->grad;
    for (std::size_t j = 0; j < g.size(); ++j) g[j] += lg[j];
  }
}

}  // namespace mcpst
