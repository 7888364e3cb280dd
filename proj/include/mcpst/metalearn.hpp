#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mcpst/dataio.hpp"
#include "mcpst/model.hpp"
#include "mcpst/optim.hpp"
#include "mcpst/params.hpp"
#include "mcpst/rng.hpp"

namespace mcpst::meta {

struct LossValue {
  double total = 0.0;
  double task = 0.0;
  double phase = 0.0;
};

/// Loss over the windows `ids` evaluated with `params`. With `grad` set the
/// parameter grads are overwritten with d total / d params and dropout is
/// active, drawing its masks from `noise_seed`.
using BatchObjective = std::function<LossValue(ParameterStore& params,
                                               std::span<const std::size_t> ids, bool grad,
                                               std::uint64_t noise_seed)>;

/// task + lambda1 * phase of `model` on a window set.
BatchObjective model_objective(const Model& model, const data::WindowSet& windows,
                               const GraphContext& graph);

/// Mean |y_hat - y| in normalized units over the listed windows (all when empty).
double window_mae(const Model& model, ParameterStore& params, const data::WindowSet& windows,
                  const GraphContext& graph, std::span<const std::size_t> ids = {},
                  std::size_t batch_size = 64);

struct Episode {
  std::vector<std::size_t> support;
  std::vector<std::size_t> query;
  std::size_t scenario_id = 0;
};

/// Uniform draw without replacement of K + Q distinct window ids.
Episode sample_episode(std::size_t n_windows, std::size_t k, std::size_t q, Rng& rng,
                       std::size_t scenario_id = 0);

struct InnerConfig {
  std::size_t steps = 5;
  double lr = 5e-4;
  double clip_tau = 1.0;
};

/// Plain clipped gradient descent on a copy of theta over the support set.
ParameterStore inner_adapt(const ParameterStore& theta, const BatchObjective& objective,
                           std::span<const std::size_t> support, const InnerConfig& cfg,
                           std::uint64_t noise_seed);

struct EpisodeTask {
  const BatchObjective* objective = nullptr;
  Episode episode;
};

struct OuterResult {
  LossValue query;  // mean over episodes, evaluated at the adapted parameters
  std::size_t failed_episodes = 0;  // dropped after a non-finite loss
};

/// First-order meta step: query gradients at each adapted copy are averaged
/// in episode order, scaled by `weight`, clipped, and applied to theta by `opt`.
OuterResult outer_update(ParameterStore& theta, std::span<const EpisodeTask> tasks,
                         const InnerConfig& inner, AdamW& opt, double weight, double clip_tau,
                         std::uint64_t noise_seed);

/// Stops after `patience` epochs without an improvement larger than min_delta.
class EarlyStopping {
 public:
  EarlyStopping(std::size_t patience, double min_delta);

  /// Returns true when `value` improves on the best so far.
  bool observe(double value);
  bool exhausted() const { return bad_epochs_ >= patience_; }
  double best() const { return best_; }
  std::size_t bad_epochs() const { return bad_epochs_; }

 private:
  std::size_t patience_;
  double min_delta_;
  double best_;
  std::size_t bad_epochs_ = 0;
};

struct LogRow {
  std::size_t epoch = 0;
  std::string stage;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double task = 0.0;
  double phase = 0.0;
  double meta = 0.0;
};

void write_log_csv(const std::filesystem::path& path, std::span<const LogRow> rows);

struct StageConfig {
  std::string name = "train";
  std::size_t epochs = 250;
  std::size_t batch_size = 32;
  std::size_t patience = 20;
  double min_delta = 1e-5;
  double clip_tau = 1.0;
  AdamWConfig adam;
  std::uint64_t seed = 0;
};

struct StageData {
  const BatchObjective* train = nullptr;
  std::size_t n_train = 0;
  const BatchObjective* val = nullptr;  // monitored for early stopping; training loss when null
  std::size_t n_val = 0;
};

struct StageResult {
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;  // 1-based; 0 when no epoch ran
  double best_monitor = 0.0;
  bool stopped_early = false;
  std::vector<LogRow> log;
  AdamW optimizer;  // state after the last step taken
};

/// Minibatch AdamW epochs with early stopping; the best checkpoint is restored.
StageResult train_stage(ParameterStore& params, const StageData& data, const StageConfig& cfg);

/// Mean objective over all `n` windows in fixed-size batches, no gradient.
LossValue evaluate_objective(ParameterStore& params, const BatchObjective& objective,
                             std::size_t n, std::size_t batch_size);

struct TwoStageResult {
  StageResult pretrain;
  StageResult finetune;
};

/// Source pre-training at pretrain_lr, then target fine-tuning at finetune_lr.
TwoStageResult two_stage_train(ParameterStore& params, const StageData& source,
                               const StageData& target, const RunConfig& cfg);

struct MetaCity {
  BatchObjective objective;
  std::size_t n_windows = 0;
};

struct MetaTrainConfig {
  std::size_t meta_steps = 200;
  std::size_t meta_batch = 4;
  std::size_t support_size = 12;
  std::size_t query_size = 16;
  InnerConfig inner;
  AdamWConfig outer;  // lr is the outer learning rate
  double weight = 1.0;
  double clip_tau = 1.0;
  std::uint64_t seed = 0;

  static MetaTrainConfig from(const RunConfig& cfg);
};

/// Episodic training over cities; one log row per meta-step.
std::vector<LogRow> meta_train(ParameterStore& theta, std::span<const MetaCity> cities,
                               const MetaTrainConfig& cfg);

}  // namespace mcpst::meta
