#include "mcpst/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace mcpst {

void AdamW::step(ParameterStore& params) {
  ++step_count_;
  const double t = static_cast<double>(step_count_);
  const double bc1 = 1.0 - std::pow(cfg_.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, t);
  for (auto& p : params.all()) {
    if (!p.trainable) continue;
    auto [mit, m_new] = m_.try_emplace(p.name, p.value.shape());
    auto [vit, v_new] = v_.try_emplace(p.name, p.value.shape());
    Tensor& m = mit->second;
    Tensor& v = vit->second;
    if (m.shape() != p.value.shape()) {
      throw std::invalid_argument("optimizer moment shape mismatch for '" + p.name + "'");
    }
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      double& theta = p.value[i];
      theta -= cfg_.lr * cfg_.weight_decay * theta;
      const double g = p.grad[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      theta -= cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
    }
  }
}

void AdamW::restore(std::int64_t step_count, std::map<std::string, Tensor> m,
                    std::map<std::string, Tensor> v) {
  if (step_count < 0) throw std::invalid_argument("negative optimizer step count");
  step_count_ = step_count;
  m_ = std::move(m);
  v_ = std::move(v);
}

double global_grad_norm(const ParameterStore& params) {
  double sq = 0.0;
  for (const auto& p : params.all()) {
    if (!p.trainable) continue;
    for (double g : p.grad.values()) sq += g * g;
  }
  return std::sqrt(sq);
}

double clip_global_norm(ParameterStore& params, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("clip threshold must be positive");
  const double norm = global_grad_norm(params);
  // Relative slack keeps a second clip from rescaling by 1 - ulp.
  if (norm <= tau * (1.0 + 1e-12)) return 1.0;
  const double s = tau / norm;
  for (auto& p : params.all()) {
    if (!p.trainable) continue;
    for (double& g : p.grad.values()) g *= s;
  }
  return s;
}

void sgd_step(ParameterStore& params, double lr) {
  for (auto& p : params.all()) {
    if (!p.trainable) continue;
    for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] -= lr * p.grad[i];
  }
}

}  // namespace mcpst
