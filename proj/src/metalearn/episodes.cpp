#include <cmath>
#include <numeric>

#include "mcpst/metalearn.hpp"

namespace mcpst::meta {

Episode sample_episode(std::size_t n_windows, std::size_t k, std::size_t q, Rng& rng,
                       std::size_t scenario_id) {
  if (k + q > n_windows) {
    throw std::invalid_argument("episode needs " + std::to_string(k + q) + " windows, only " +
                                std::to_string(n_windows) + " available");
  }
  std::vector<std::size_t> ids(n_windows);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  // Partial Fisher-Yates: the first k + q slots become a uniform sample.
  for (std::size_t i = 0; i < k + q; ++i) std::swap(ids[i], ids[i + rng.index(n_windows - i)]);
  Episode ep;
  ep.scenario_id = scenario_id;
  ep.support.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k));
  ep.query.assign(ids.begin() + static_cast<std::ptrdiff_t>(k),
                  ids.begin() + static_cast<std::ptrdiff_t>(k + q));
  return ep;
}

ParameterStore inner_adapt(const ParameterStore& theta, const BatchObjective& objective,
                           std::span<const std::size_t> support, const InnerConfig& cfg,
                           std::uint64_t noise_seed) {
  ParameterStore adapted = theta;
  for (std::size_t s = 0; s < cfg.steps; ++s) {
    const LossValue loss = objective(adapted, support, true, Rng::derive(noise_seed, s).next_u64());
    if (!std::isfinite(loss.total)) throw ad::NumericError("non-finite support loss during adaptation");
    clip_global_norm(adapted, cfg.clip_tau);
    sgd_step(adapted, cfg.lr);
  }
  return adapted;
}

OuterResult outer_update(ParameterStore& theta, std::span<const EpisodeTask> tasks,
                         const InnerConfig& inner, AdamW& opt, double weight, double clip_tau,
                         std::uint64_t noise_seed) {
  OuterResult result;
  std::vector<Tensor> grad_sum;
  grad_sum.reserve(theta.size());
  for (const Parameter& p : theta.all()) grad_sum.emplace_back(p.value.shape());

  std::size_t used = 0;
  for (std::size_t e = 0; e < tasks.size(); ++e) {
    const EpisodeTask& task = tasks[e];
    Rng seeds(Rng::derive(noise_seed, e));
    try {
      ParameterStore adapted =
          inner_adapt(theta, *task.objective, task.episode.support, inner, seeds.next_u64());
      const LossValue q = (*task.objective)(adapted, task.episode.query, true, seeds.next_u64());
      if (!std::isfinite(q.total)) throw ad::NumericError("non-finite query loss");
      for (std::size_t i = 0; i < grad_sum.size(); ++i) {
        const Tensor& g = adapted.all()[i].grad;
        for (std::size_t j = 0; j < g.size(); ++j) grad_sum[i][j] += g[j];
      }
      result.query.total += q.total;
      result.query.task += q.task;
      result.query.phase += q.phase;
      ++used;
    } catch (const ad::NumericError&) {
      ++result.failed_episodes;
    }
  }
  if (used == 0) return result;

  const double s = weight / static_cast<double>(used);
  for (std::size_t i = 0; i < grad_sum.size(); ++i) {
    Tensor& g = theta.all()[i].grad;
    for (std::size_t j = 0; j < g.size(); ++j) g[j] = s * grad_sum[i][j];
  }
  clip_global_norm(theta, clip_tau);
  opt.step(theta);
  const double inv = 1.0 / static_cast<double>(used);
  result.query.total *= inv;
  result.query.task *= inv;
  result.query.phase *= inv;
  return result;
}

MetaTrainConfig MetaTrainConfig::from(const RunConfig& cfg) {
  MetaTrainConfig m;
  m.meta_steps = cfg.meta_steps;
  m.meta_batch = cfg.meta_batch;
  m.support_size = cfg.support_size;
  m.query_size = cfg.query_size;
  m.inner = {cfg.inner_steps, cfg.inner_lr, cfg.clip_tau};
  m.outer = {cfg.outer_lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, cfg.weight_decay};
  m.weight = cfg.lambda2;
  m.clip_tau = cfg.clip_tau;
  m.seed = cfg.seed;
  return m;
}

std::vector<LogRow> meta_train(ParameterStore& theta, std::span<const MetaCity> cities,
                               const MetaTrainConfig& cfg) {
  if (cities.empty()) throw std::invalid_argument("meta-training needs at least one city");
  Rng rng(Rng::derive(cfg.seed, 0x6d657461));
  AdamW opt(cfg.outer);
  std::vector<LogRow> log;
  for (std::size_t step = 0; step < cfg.meta_steps; ++step) {
    std::vector<EpisodeTask> tasks;
    for (std::size_t b = 0; b < cfg.meta_batch; ++b) {
      const std::size_t c = rng.index(cities.size());
      tasks.push_back({&cities[c].objective,
                       sample_episode(cities[c].n_windows, cfg.support_size, cfg.query_size, rng, c)});
    }
    const OuterResult r =
        outer_update(theta, tasks, cfg.inner, opt, cfg.weight, cfg.clip_tau, rng.next_u64());
    LogRow row;
    row.epoch = step + 1;
    row.stage = "meta";
    row.train_loss = cfg.weight * r.query.total;
    row.val_loss = std::nan("");
    row.task = r.query.task;
    row.phase = r.query.phase;
    row.meta = r.query.total;
    log.push_back(row);
  }
  return log;
}

}  // namespace mcpst::meta
