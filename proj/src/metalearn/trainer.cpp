#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include "mcpst/metalearn.hpp"

namespace mcpst::meta {

EarlyStopping::EarlyStopping(std::size_t patience, double min_delta)
    : patience_(patience), min_delta_(min_delta), best_(std::numeric_limits<double>::infinity()) {
  if (min_delta < 0.0) throw std::invalid_argument("min_delta must be non-negative");
}

bool EarlyStopping::observe(double value) {
  if (value < best_ - min_delta_) {
    best_ = value;
    bad_epochs_ = 0;
    return true;
  }
  ++bad_epochs_;
  return false;
}

void write_log_csv(const std::filesystem::path& path, std::span<const LogRow> rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write log '" + path.string() + "'");
  out << "epoch,stage,train_loss,val_loss,task,phase,meta\n";
  char buf[256];
  for (const LogRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%s,%.10g,%.10g,%.10g,%.10g,%.10g\n", r.epoch, r.stage.c_str(),
                  r.train_loss, r.val_loss, r.task, r.phase, r.meta);
    out << buf;
  }
}

LossValue evaluate_objective(ParameterStore& params, const BatchObjective& objective,
                             std::size_t n, std::size_t batch_size) {
  if (n == 0) throw std::invalid_argument("evaluation over zero windows");
  std::vector<std::size_t> ids(n);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  LossValue sum;
  for (std::size_t lo = 0; lo < n; lo += batch_size) {
    const std::size_t len = std::min(batch_size, n - lo);
    const LossValue v = objective(params, std::span(ids).subspan(lo, len), false, 0);
    const double w = static_cast<double>(len);
    sum.total += w * v.total;
    sum.task += w * v.task;
    sum.phase += w * v.phase;
  }
  const double inv = 1.0 / static_cast<double>(n);
  return {sum.total * inv, sum.task * inv, sum.phase * inv};
}

StageResult train_stage(ParameterStore& params, const StageData& data, const StageConfig& cfg) {
  StageResult result;
  if (cfg.epochs == 0) return result;
  if (!data.train || data.n_train == 0) throw std::invalid_argument("training stage has no windows");
  if (cfg.batch_size == 0) throw std::invalid_argument("batch size must be positive");

  AdamW opt(cfg.adam);
  EarlyStopping stopper(cfg.patience, cfg.min_delta);
  Rng rng(Rng::derive(cfg.seed, 0x7472));
  std::vector<Tensor> best;
  std::vector<std::size_t> order(data.n_train);
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(order);
    LossValue sum;
    for (std::size_t lo = 0; lo < order.size(); lo += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, order.size() - lo);
      const LossValue v =
          (*data.train)(params, std::span(order).subspan(lo, len), true, rng.next_u64());
      clip_global_norm(params, cfg.clip_tau);
      opt.step(params);
      const double w = static_cast<double>(len);
      sum.total += w * v.total;
      sum.task += w * v.task;
      sum.phase += w * v.phase;
    }
    const double inv = 1.0 / static_cast<double>(order.size());
    LogRow row;
    row.epoch = epoch;
    row.stage = cfg.name;
    row.train_loss = sum.total * inv;
    row.task = sum.task * inv;
    row.phase = sum.phase * inv;
    row.val_loss = data.val && data.n_val > 0
                       ? evaluate_objective(params, *data.val, data.n_val, cfg.batch_size).total
                       : std::nan("");
    result.log.push_back(row);
    result.epochs_run = epoch;

    const double monitor = std::isnan(row.val_loss) ? row.train_loss : row.val_loss;
    if (stopper.observe(monitor)) {
      result.best_epoch = epoch;
      result.best_monitor = monitor;
      best.clear();
      for (const Parameter& p : params.all()) best.push_back(p.value);
    } else if (stopper.exhausted()) {
      result.stopped_early = true;
      break;
    }
  }
  for (std::size_t i = 0; i < best.size(); ++i) params.all()[i].value = best[i];
  result.optimizer = std::move(opt);
  return result;
}

TwoStageResult two_stage_train(ParameterStore& params, const StageData& source,
                               const StageData& target, const RunConfig& cfg) {
  StageConfig stage;
  stage.batch_size = cfg.batch_size;
  stage.patience = cfg.patience;
  stage.min_delta = cfg.min_delta;
  stage.clip_tau = cfg.clip_tau;
  stage.adam = {cfg.pretrain_lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, cfg.weight_decay};

  TwoStageResult out;
  stage.name = "pretrain";
  stage.epochs = cfg.pretrain_epochs;
  stage.seed = Rng::derive(cfg.seed, 1).next_u64();
  out.pretrain = train_stage(params, source, stage);

  stage.name = "finetune";
  stage.epochs = cfg.finetune_epochs;
  stage.adam.lr = cfg.finetune_lr;
  stage.seed = Rng::derive(cfg.seed, 2).next_u64();
  out.finetune = train_stage(params, target, stage);
  return out;
}

}  // namespace mcpst::meta
