// mcpst: train, adapt, forecast, evaluate and validate from the command line.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "mcpst/config.hpp"
#include "mcpst/dataio.hpp"
#include "mcpst/metalearn.hpp"
#include "mcpst/model.hpp"
#include "mcpst/predict.hpp"
#include "mcpst/syncengine.hpp"
#include "mcpst/validation.hpp"

namespace fs = std::filesystem;
using namespace mcpst;

namespace {

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool with_config = true) {
  if (with_config) {
    cmd->add_option("--config", o.config_path, "Run configuration (key = value lines)")
        ->check(CLI::ExistingFile);
  }
  cmd->add_option("--set", o.overrides, "Override a config key, e.g. --set hidden=8")
      ->type_name("KEY=VALUE");
  cmd->add_option("--seed", o.seed, "Seed; falls back to MCPST_SEED, then the config");
}

void apply_overrides(RunConfig& cfg, const CommonOptions& o) {
  for (const std::string& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--set expects KEY=VALUE, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (o.seed) {
    cfg.seed = *o.seed;
  } else {
    cfg.seed = seed_from_env(cfg.seed);
  }
  cfg.validate();
}

RunConfig resolve_config(const CommonOptions& o) {
  RunConfig cfg = o.config_path.empty() ? RunConfig{} : RunConfig::load(o.config_path);
  apply_overrides(cfg, o);
  return cfg;
}

graph::TrafficNetwork load_network(const fs::path& path, std::size_t n_nodes, bool keep_directed) {
  const auto edges = data::load_edges(path);
  return graph::TrafficNetwork::from_edges(n_nodes, edges, keep_directed);
}

data::ZScore model_scale(const RunConfig& cfg) { return {cfg.data_mean, cfg.data_std}; }
data::FeatureStats model_features(const RunConfig& cfg) {
  return {cfg.data_fvar_mean, cfg.data_fvar_std};
}

void record_stats(Model& model, const data::PreparedSeries& p, double interval) {
  model.set_data_stats(p.scale.mean, p.scale.std, interval, p.features.fvar_mean,
                       p.features.fvar_std);
}

meta::StageConfig stage_config(const RunConfig& cfg, std::string name, double lr,
                               std::size_t epochs, std::uint64_t tag) {
  meta::StageConfig s;
  s.name = std::move(name);
  s.epochs = epochs;
  s.batch_size = cfg.batch_size;
  s.patience = cfg.patience;
  s.min_delta = cfg.min_delta;
  s.clip_tau = cfg.clip_tau;
  s.adam = {lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, cfg.weight_decay};
  s.seed = Rng::derive(cfg.seed, tag).next_u64();
  return s;
}

// History-only windows x[s .. s + L) for the given starts: B x L x N x C.
Tensor gather_history(const data::PreparedSeries& p, std::span<const std::size_t> starts,
                      std::size_t history) {
  const std::size_t n = p.inputs.dim(1);
  const std::size_t c = p.inputs.dim(2);
  Tensor x({starts.size(), history, n, c});
  for (std::size_t k = 0; k < starts.size(); ++k) {
    if (starts[k] + history > p.inputs.dim(0)) throw std::out_of_range("history window past the series end");
    const double* src = p.inputs.data() + starts[k] * n * c;
    std::copy(src, src + history * n * c, x.data() + k * history * n * c);
  }
  return x;
}

std::ostream& output_stream(const std::string& path, std::ofstream& file) {
  if (path.empty() || path == "-") return std::cout;
  file.open(path);
  if (!file) throw std::runtime_error("cannot write '" + path + "'");
  return file;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string default_log_path(const std::string& model_out) { return model_out + ".log.csv"; }

// --- commands ----------------------------------------------------------------

struct TrainArgs {
  CommonOptions common;
  std::string series, adjacency, out, log;
};

int cmd_train(const TrainArgs& a) {
  const RunConfig cfg = resolve_config(a.common);
  const data::TrafficSeries series = data::load_series(a.series);
  const auto net = load_network(a.adjacency, series.nodes(), cfg.keep_directed);
  const data::SplitRanges split = data::split_single_city(series.steps());
  const data::PreparedSeries prep =
      data::prepare_series(series, net, cfg.history, cfg.augment_features, split.train);
  const data::WindowSet train(prep, cfg.history, cfg.horizon, split.train, cfg.window_stride);
  const data::WindowSet val(prep, cfg.history, cfg.horizon, split.val);

  Model model(cfg);
  record_stats(model, prep, series.interval_minutes);
  const GraphContext graph = GraphContext::build(net, cfg);
  const auto train_obj = meta::model_objective(model, train, graph);
  const auto val_obj = meta::model_objective(model, val, graph);
  const meta::StageResult r = meta::train_stage(
      model.params(), {&train_obj, train.size(), &val_obj, val.size()},
      stage_config(cfg, "train", cfg.pretrain_lr, cfg.pretrain_epochs, 1));
  model.save(a.out, &r.optimizer);
  meta::write_log_csv(a.log.empty() ? default_log_path(a.out) : a.log, r.log);
  std::cout << "trained " << r.epochs_run << " epochs, best epoch " << r.best_epoch
            << ", val loss " << fmt(r.best_monitor) << '\n';
  return 0;
}

struct MetaArgs {
  CommonOptions common;
  std::string cities, out, log;
};

int cmd_meta_train(const MetaArgs& a) {
  const RunConfig cfg = resolve_config(a.common);
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(a.cities)) {
    if (entry.is_directory() && fs::exists(entry.path() / "series.csv")) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) {
    throw std::runtime_error("'" + a.cities + "' has no city subdirectories with series.csv");
  }

  struct City {
    data::TrafficSeries series;
    std::optional<GraphContext> graph;
    data::PreparedSeries prep;
    std::optional<data::WindowSet> windows;
  };
  std::vector<std::unique_ptr<City>> cities;
  Model model(cfg);
  std::vector<meta::MetaCity> tasks;
  for (const fs::path& dir : dirs) {
    auto c = std::make_unique<City>();
    c->series = data::load_series(dir / "series.csv");
    auto net = load_network(dir / "adjacency.csv", c->series.nodes(), cfg.keep_directed);
    const data::SplitRanges split = data::split_single_city(c->series.steps());
    const data::Range fit{0, split.val.end};
    c->prep = data::prepare_series(c->series, net, cfg.history, cfg.augment_features, fit);
    c->graph.emplace(GraphContext::build(std::move(net), cfg));
    c->windows.emplace(c->prep, cfg.history, cfg.horizon, fit);
    if (cities.empty()) record_stats(model, c->prep, c->series.interval_minutes);
    tasks.push_back({meta::model_objective(model, *c->windows, *c->graph), c->windows->size()});
    cities.push_back(std::move(c));
  }
  const auto log = meta::meta_train(model.params(), tasks, meta::MetaTrainConfig::from(cfg));
  model.save(a.out);
  meta::write_log_csv(a.log.empty() ? default_log_path(a.out) : a.log, log);
  std::cout << "meta-trained " << log.size() << " steps over " << cities.size() << " cities\n";
  return 0;
}

struct AdaptArgs {
  CommonOptions common;
  std::string model, series, adjacency, out, log;
  std::optional<double> days;
};

int cmd_adapt(const AdaptArgs& a) {
  Model model = Model::load(a.model);
  RunConfig train_cfg = model.config();
  apply_overrides(train_cfg, a.common);
  const double days = a.days.value_or(train_cfg.adapt_days);
  const data::TrafficSeries series = data::load_series(a.series);
  const auto net = load_network(a.adjacency, series.nodes(), model.config().keep_directed);
  const data::SplitRanges split =
      data::split_target_city(series.steps(), series.interval_minutes, days);
  const std::size_t span = model.config().history + model.config().horizon;
  auto [fit, hold] = data::holdout_tail(split.adapt, 0.1);
  // Too few adaptation days for a held-out window: train on all of them and
  // monitor the training loss instead.
  if (hold.size() < span) {
    fit = split.adapt;
    hold = {fit.end, fit.end};
  }
  const data::PreparedSeries prep = data::prepare_series(
      series, net, model.config().history, model.config().augment_features, fit);
  record_stats(model, prep, series.interval_minutes);
  const data::WindowSet train(prep, model.config().history, model.config().horizon, fit,
                              train_cfg.window_stride);
  const GraphContext graph = GraphContext::build(net, model.config());
  const auto train_obj = meta::model_objective(model, train, graph);
  meta::StageData stage{&train_obj, train.size(), nullptr, 0};
  std::optional<data::WindowSet> val;
  meta::BatchObjective val_obj;
  if (hold.size() >= span) {
    val.emplace(prep, model.config().history, model.config().horizon, hold);
    val_obj = meta::model_objective(model, *val, graph);
    stage.val = &val_obj;
    stage.n_val = val->size();
  }
  const meta::StageResult r = meta::train_stage(
      model.params(), stage,
      stage_config(train_cfg, "finetune", train_cfg.finetune_lr, train_cfg.finetune_epochs, 2));
  model.save(a.out, &r.optimizer);
  meta::write_log_csv(a.log.empty() ? default_log_path(a.out) : a.log, r.log);
  std::cout << "adapted on " << split.adapt.size() << " steps, " << r.epochs_run
            << " epochs, best epoch " << r.best_epoch << '\n';
  return 0;
}

struct ForecastArgs {
  std::string model, series, adjacency, out;
  std::optional<std::size_t> at;
};

int cmd_forecast(const ForecastArgs& a) {
  Model model = Model::load(a.model);
  const RunConfig& cfg = model.config();
  const data::TrafficSeries series = data::load_series(a.series);
  const auto net = load_network(a.adjacency, series.nodes(), cfg.keep_directed);
  if (series.steps() < cfg.history) throw std::runtime_error("series shorter than the history window");
  const std::size_t at = a.at.value_or(series.steps() - cfg.history);
  if (at + cfg.history > series.steps()) {
    throw std::out_of_range("--at " + std::to_string(at) + " leaves fewer than " +
                            std::to_string(cfg.history) + " history rows");
  }
  const data::PreparedSeries prep = data::prepare_series(
      series, net, cfg.history, cfg.augment_features, model_scale(cfg), model_features(cfg));
  const GraphContext graph = GraphContext::build(net, cfg);
  const std::size_t starts[1] = {at};
  const Forecast f = model.predict(gather_history(prep, starts, cfg.history), graph);

  std::ofstream file;
  std::ostream& os = output_stream(a.out, file);
  os << "node,step,y_hat,sigma2\n";
  const std::size_t h = cfg.horizon;
  for (std::size_t i = 0; i < series.nodes(); ++i) {
    for (std::size_t s = 0; s < h; ++s) {
      const double y = f.y_hat[i * h + s] * cfg.data_std + cfg.data_mean;
      const double v = f.sigma2[i * h + s] * cfg.data_std * cfg.data_std;
      os << i << ',' << s + 1 << ',' << fmt(y) << ',' << fmt(v) << '\n';
    }
  }
  return 0;
}

struct EvaluateArgs {
  std::string model, series, adjacency, out, range = "test";
  std::vector<std::size_t> steps{1, 3, 6, 12};
};

int cmd_evaluate(const EvaluateArgs& a) {
  Model model = Model::load(a.model);
  const RunConfig& cfg = model.config();
  const data::TrafficSeries series = data::load_series(a.series);
  const auto net = load_network(a.adjacency, series.nodes(), cfg.keep_directed);
  const data::PreparedSeries prep = data::prepare_series(
      series, net, cfg.history, cfg.augment_features, model_scale(cfg), model_features(cfg));
  data::Range range{0, series.steps()};
  if (a.range == "test") range = data::split_single_city(series.steps()).test;
  const data::WindowSet windows(prep, cfg.history, cfg.horizon, range);
  const GraphContext graph = GraphContext::build(net, cfg);

  std::vector<std::size_t> steps;
  for (std::size_t s : a.steps) {
    if (s > cfg.horizon) throw std::invalid_argument("step " + std::to_string(s) + " exceeds horizon " + std::to_string(cfg.horizon));
    steps.push_back(s);
  }
  Tensor y_hat({windows.size(), series.nodes(), cfg.horizon});
  Tensor y(y_hat.shape());
  const std::size_t per = series.nodes() * cfg.horizon;
  for (std::size_t lo = 0; lo < windows.size(); lo += 64) {
    std::vector<std::size_t> ids;
    for (std::size_t i = lo; i < std::min(lo + 64, windows.size()); ++i) ids.push_back(i);
    const data::Batch b = windows.batch(ids);
    const Forecast f = model.predict(b.x, graph);
    for (std::size_t i = 0; i < f.y_hat.size(); ++i) {
      y_hat[lo * per + i] = f.y_hat[i] * cfg.data_std + cfg.data_mean;
      y[lo * per + i] = b.y[i] * cfg.data_std + cfg.data_mean;
    }
  }
  const auto rows = predict::metrics(y_hat, y, steps, cfg.data_interval_minutes);
  std::ofstream file;
  std::ostream& os = output_stream(a.out, file);
  os << "step,minutes,mae,rmse\n";
  for (const auto& r : rows) {
    os << r.step << ',' << fmt(r.minutes) << ',' << fmt(r.mae) << ',' << fmt(r.rmse) << '\n';
  }
  return 0;
}

int cmd_validate(std::optional<std::uint64_t> seed, const std::string& out) {
  const std::uint64_t s = seed ? *seed : seed_from_env(42);
  const validation::ValidationReport report = validation::run_all(s);
  report.print_table(std::cout);
  if (!out.empty()) report.write_csv(out);
  const bool ok = report.all_pass();
  std::cout << (ok ? "all checks passed\n" : "validation FAILED\n");
  return ok ? 0 : 1;
}

int cmd_synth(const std::string& spec_path, const std::string& out,
              std::optional<std::uint64_t> seed) {
  const data::SynthSpec spec = spec_path.empty() ? data::SynthSpec{} : data::SynthSpec::load(spec_path);
  const data::SynthCity city = data::synth_generate(spec, seed ? *seed : seed_from_env(42));
  fs::create_directories(out);
  data::save_series(fs::path(out) / "series.csv", city.series);
  data::save_edges(fs::path(out) / "adjacency.csv", city.network);
  std::cout << "wrote " << city.series.steps() << " x " << city.series.nodes() << " series to "
            << out << '\n';
  return 0;
}

struct ExportArgs {
  std::string model, series, adjacency, what = "alpha", out;
};

int cmd_export(const ExportArgs& a) {
  Model model = Model::load(a.model);
  const RunConfig& cfg = model.config();
  const data::TrafficSeries series = data::load_series(a.series);
  const auto net = load_network(a.adjacency, series.nodes(), cfg.keep_directed);
  const data::PreparedSeries prep = data::prepare_series(
      series, net, cfg.history, cfg.augment_features, model_scale(cfg), model_features(cfg));
  const GraphContext graph = GraphContext::build(net, cfg);
  if (series.steps() < cfg.history) throw std::runtime_error("series shorter than the history window");
  const std::size_t n_windows = series.steps() - cfg.history + 1;
  const std::size_t n = series.nodes();

  std::ofstream file;
  std::ostream& os = output_stream(a.out, file);
  if (a.what == "alpha") {
    os << "window,node,a_diff,a_sync,a_spec\n";
  } else if (a.what == "order") {
    os << "window,step,r\n";
  } else if (a.what == "phases") {
    os << "window,step,node,phase\n";
  } else {
    throw std::invalid_argument("--what must be alpha, order or phases");
  }
  for (std::size_t lo = 0; lo < n_windows; lo += 64) {
    std::vector<std::size_t> starts;
    for (std::size_t s = lo; s < std::min(lo + 64, n_windows); ++s) starts.push_back(s);
    ParamBinding bind(model.params(), false);
    ForwardTrace trace;
    const ForwardResult out =
        model.forward(bind, gather_history(prep, starts, cfg.history), graph, {}, &trace);
    for (std::size_t k = 0; k < starts.size(); ++k) {
      const std::size_t w = starts[k];
      if (a.what == "alpha") {
        const Tensor& al = out.alpha.value();
        for (std::size_t i = 0; i < n; ++i) {
          const double* p = al.data() + (k * n + i) * 3;
          os << w << ',' << i << ',' << fmt(p[0]) << ',' << fmt(p[1]) << ',' << fmt(p[2]) << '\n';
        }
        continue;
      }
      for (std::size_t step = 0; step < trace.phase_steps.size(); ++step) {
        const double* ph = trace.phase_steps[step].data() + k * n;
        if (a.what == "order") {
          double re = 0.0, im = 0.0;
          for (std::size_t i = 0; i < n; ++i) {
            re += std::cos(ph[i]);
            im += std::sin(ph[i]);
          }
          os << w << ',' << step + 1 << ',' << fmt(std::hypot(re, im) / static_cast<double>(n)) << '\n';
        } else {
          for (std::size_t i = 0; i < n; ++i) {
            os << w << ',' << step + 1 << ',' << i << ',' << fmt(ph[i]) << '\n';
          }
        }
      }
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-phase consensus traffic forecasting"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "Train on one city's chronological training split");
  add_common(c_train, train.common);
  c_train->add_option("--series", train.series, "Series CSV")->required()->check(CLI::ExistingFile);
  c_train->add_option("--adjacency", train.adjacency, "Adjacency CSV")->required()->check(CLI::ExistingFile);
  c_train->add_option("--out", train.out, "Model file to write")->required();
  c_train->add_option("--log", train.log, "Training log CSV (default <out>.log.csv)");

  MetaArgs meta_args;
  auto* c_meta = app.add_subcommand("meta-train", "Episodic training over several cities");
  add_common(c_meta, meta_args.common);
  c_meta->add_option("--cities", meta_args.cities, "Directory of cities, each with series.csv and adjacency.csv")
      ->required()
      ->check(CLI::ExistingDirectory);
  c_meta->add_option("--out", meta_args.out, "Model file to write")->required();
  c_meta->add_option("--log", meta_args.log, "Episode log CSV (default <out>.log.csv)");

  AdaptArgs adapt;
  auto* c_adapt = app.add_subcommand("adapt", "Fine-tune on the first days of a target city");
  add_common(c_adapt, adapt.common, false);
  c_adapt->add_option("--model", adapt.model, "Model file")->required()->check(CLI::ExistingFile);
  c_adapt->add_option("--series", adapt.series, "Series CSV")->required()->check(CLI::ExistingFile);
  c_adapt->add_option("--adjacency", adapt.adjacency, "Adjacency CSV")->required()->check(CLI::ExistingFile);
  c_adapt->add_option("--days", adapt.days, "Adaptation days (default adapt_days)");
  c_adapt->add_option("--out", adapt.out, "Adapted model file")->required();
  c_adapt->add_option("--log", adapt.log, "Training log CSV (default <out>.log.csv)");

  ForecastArgs forecast;
  auto* c_forecast = app.add_subcommand("forecast", "Forecast H steps after one history window");
  c_forecast->add_option("--model", forecast.model, "Model file")->required()->check(CLI::ExistingFile);
  c_forecast->add_option("--series", forecast.series, "Series CSV")->required()->check(CLI::ExistingFile);
  c_forecast->add_option("--adjacency", forecast.adjacency, "Adjacency CSV")->required()->check(CLI::ExistingFile);
  c_forecast->add_option("--at", forecast.at, "First row of the history window (default: the last window)");
  c_forecast->add_option("--out", forecast.out, "Output CSV (default stdout)");

  EvaluateArgs evaluate;
  auto* c_eval = app.add_subcommand("evaluate", "MAE/RMSE per horizon step in sensor units");
  c_eval->add_option("--model", evaluate.model, "Model file")->required()->check(CLI::ExistingFile);
  c_eval->add_option("--series", evaluate.series, "Series CSV")->required()->check(CLI::ExistingFile);
  c_eval->add_option("--adjacency", evaluate.adjacency, "Adjacency CSV")->required()->check(CLI::ExistingFile);
  c_eval->add_option("--steps", evaluate.steps, "Horizon steps to report")->delimiter(',');
  c_eval->add_option("--range", evaluate.range, "Windows to score: test (last 20%) or all")
      ->check(CLI::IsMember({"test", "all"}));
  c_eval->add_option("--out", evaluate.out, "Output CSV (default stdout)");

  std::optional<std::uint64_t> validate_seed;
  std::string validate_out;
  auto* c_validate = app.add_subcommand("validate", "Run the numerical validation suite");
  c_validate->add_option("--seed", validate_seed, "Seed; falls back to MCPST_SEED, then 42");
  c_validate->add_option("--out", validate_out, "Report CSV");

  std::string synth_spec, synth_out;
  std::optional<std::uint64_t> synth_seed;
  auto* c_synth = app.add_subcommand("synth", "Generate a synthetic city");
  c_synth->add_option("--spec", synth_spec, "Synthetic spec (key = value lines)")->check(CLI::ExistingFile);
  c_synth->add_option("--out", synth_out, "Output directory")->required();
  c_synth->add_option("--seed", synth_seed, "Seed; falls back to MCPST_SEED, then 42");

  ExportArgs exp;
  auto* c_export = app.add_subcommand("export", "Export attention weights or phase dynamics");
  c_export->add_option("--model", exp.model, "Model file")->required()->check(CLI::ExistingFile);
  c_export->add_option("--series", exp.series, "Series CSV")->required()->check(CLI::ExistingFile);
  c_export->add_option("--adjacency", exp.adjacency, "Adjacency CSV")->required()->check(CLI::ExistingFile);
  c_export->add_option("--what", exp.what, "alpha, order or phases")
      ->check(CLI::IsMember({"alpha", "order", "phases"}));
  c_export->add_option("--out", exp.out, "Output CSV (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*c_train) return cmd_train(train);
    if (*c_meta) return cmd_meta_train(meta_args);
    if (*c_adapt) return cmd_adapt(adapt);
    if (*c_forecast) return cmd_forecast(forecast);
    if (*c_eval) return cmd_evaluate(evaluate);
    if (*c_validate) return cmd_validate(validate_seed, validate_out);
    if (*c_synth) return cmd_synth(synth_spec, synth_out, synth_seed);
    if (*c_export) return cmd_export(exp);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
