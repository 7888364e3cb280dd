#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "mcpst/params.hpp"

namespace mcpst {

struct AdamWConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

/// AdamW with decoupled weight decay applied before the moment update.
/// Moments are keyed by parameter name; only trainable parameters move.
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

  void step(ParameterStore& params);

  const AdamWConfig& config() const noexcept { return cfg_; }
  void set_lr(double lr) noexcept { cfg_.lr = lr; }
  std::int64_t step_count() const noexcept { return step_count_; }

  const std::map<std::string, Tensor>& first_moment() const noexcept { return m_; }
  const std::map<std::string, Tensor>& second_moment() const noexcept { return v_; }
  void restore(std::int64_t step_count, std::map<std::string, Tensor> m,
               std::map<std::string, Tensor> v);

 private:
  AdamWConfig cfg_;
  std::int64_t step_count_ = 0;
  std::map<std::string, Tensor> m_;
  std::map<std::string, Tensor> v_;
};

double global_grad_norm(const ParameterStore& params);

/// Scales all trainable grads by tau/norm when the global norm exceeds tau.
/// Returns the applied scale (1 when untouched).
double clip_global_norm(ParameterStore& params, double tau);

/// Plain gradient descent on trainable parameters.
void sgd_step(ParameterStore& params, double lr);

}  // namespace mcpst
