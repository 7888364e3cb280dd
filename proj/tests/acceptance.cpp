// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance            run every criterion
//   acceptance 2 5 8      run the listed criteria only
//   acceptance --full-fd  probe every scalar in criterion 5 (slow)

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <functional>
#include <memory>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <unistd.h>
#include <vector>

#include "mcpst/diffengine.hpp"
#include "mcpst/gradcheck.hpp"
#include "mcpst/metalearn.hpp"
#include "mcpst/model.hpp"
#include "mcpst/syncengine.hpp"
#include "mcpst/validation.hpp"

using namespace mcpst;
namespace ad = mcpst::ad;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

template <class... Args>
std::string fmt(const char* f, Args... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, static_cast<double>(args)...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

graph::TrafficNetwork random_graph(std::size_t n, Rng& rng, double p) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);
  std::vector<graph::Edge> edges;
  for (std::size_t i = 1; i < n; ++i) edges.push_back({order[i - 1], order[i], rng.uniform(0.1, 1.0)});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (rng.uniform() < p) edges.push_back({i, j, rng.uniform(0.1, 1.0)});
    }
  }
  const std::size_t m = edges.size();
  for (std::size_t k = 0; k < m; ++k) edges.push_back({edges[k].dst, edges[k].src, edges[k].weight});
  return graph::TrafficNetwork::from_edges(n, edges);
}

// 1 ---------------------------------------------------------------------------
Outcome validation_suite() {
  const std::clock_t c0 = std::clock();
  const validation::ValidationReport rep = validation::run_all(42);
  const double cpu = static_cast<double>(std::clock() - c0) / CLOCKS_PER_SEC;
  std::string failed;
  for (const auto& r : rep.rows) {
    if (!r.pass && !r.skipped) failed += " " + r.check;
  }
  const bool ok = rep.all_pass() && cpu < 60.0;
  return {ok, std::to_string(rep.rows.size()) + " checks" +
                  (failed.empty() ? std::string(", all pass") : ", failed:" + failed) +
                  fmt(", %.1f s CPU (limit 60)", cpu)};
}

// 2 ---------------------------------------------------------------------------
Outcome conservation() {
  Rng rng(2002);
  diffusion::DiffusionConfig cfg;  // K = 6
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.index(31);
    const graph::TrafficNetwork net = random_graph(n, rng, 0.2);
    const std::size_t batch = 2, width = 3;
    Tensor t0({batch, n, width});
    for (double& v : t0.values()) v = rng.uniform(0.0, 1.0);
    const auto out = diffusion::run_diffusion(
        {ad::constant(t0), 0}, graph::laplacians(net).combinatorial,
        ad::constant(Tensor::scalar(rng.uniform(0.01, 0.3))),
        ad::constant(Tensor::scalar(rng.uniform(0.5, 2.0))), cfg);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t d = 0; d < width; ++d) {
        double before = 0.0, after = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          before += t0[(b * n + i) * width + d];
          after += out.t_state.value()[(b * n + i) * width + d];
        }
        worst = std::max(worst, std::abs(after - before) / std::abs(before));
      }
    }
  }
  return {worst <= 1e-9, fmt("max relative node-sum change %.2e over 50 graphs (bound 1e-9)", worst)};
}

// 3 ---------------------------------------------------------------------------
Outcome mean_drift() {
  Rng rng(3003);
  sync::SyncConfig cfg;  // K = 10, dt = 0.1
  double worst = 0.0;
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 2 + rng.index(15);
    const graph::TrafficNetwork net = random_graph(n, rng, 0.3);
    Tensor phi({1, n}), nu({1, n});
    for (double& v : phi.values()) v = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (double& v : nu.values()) v = rng.normal();
    sync::PhaseState s{ad::constant(phi), phi, 0};
    const auto out = sync::run_sync(s, net.adjacency(), ad::constant(nu),
                                    ad::constant(Tensor({1, n}, rng.uniform(0.05, 1.0))),
                                    ad::constant(Tensor::scalar(rng.uniform(0.1, 1.0))), cfg);
    double m0 = 0.0, m1 = 0.0, mnu = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      m0 += phi[i];
      m1 += out.unwrapped[i];
      mnu += nu[i];
    }
    const double dn = static_cast<double>(n);
    const double expected = m0 / dn + static_cast<double>(cfg.k_steps) * cfg.dt * mnu / dn;
    worst = std::max(worst, std::abs(m1 / dn - expected));
  }
  return {worst <= 1e-10, fmt("max mean-phase deviation %.2e over 30 graphs (bound 1e-10)", worst)};
}

// 4 ---------------------------------------------------------------------------
Outcome closed_forms() {
  const std::vector<graph::Edge> e{{0, 1, 1.0}, {1, 0, 1.0}};
  const graph::TrafficNetwork k2 = graph::TrafficNetwork::from_edges(2, e);
  const Tensor lap = graph::laplacians(k2).combinatorial;
  diffusion::DiffusionConfig cfg;
  const auto eng = diffusion::run_diffusion({ad::constant(Tensor({1, 2, 1}, {1.0, 0.0})), 0}, lap,
                                            ad::constant(Tensor::scalar(0.3)),
                                            ad::constant(Tensor::scalar(1.0)), cfg);
  const double engine_gap = eng.t_state.value()[0] - eng.t_state.value()[1];
  const Tensor exact = validation::heat_oracle(lap, Tensor({2, 1}, {1.0, 0.0}), 0.3, 1.0, 0.1);
  const double oracle_gap = exact[0] - exact[1];
  const double r = sync::order_parameter(ad::constant(Tensor({1, 2}, {0.0, std::numbers::pi / 2})))
                       .value()[0];
  const double e1 = std::abs(engine_gap - std::pow(0.99, 6));
  const double e2 = std::abs(oracle_gap - std::exp(-0.06));
  const double e3 = std::abs(r - std::sqrt(2.0) / 2.0);
  return {e1 <= 1e-12 && e2 <= 1e-12 && e3 <= 1e-12,
          fmt("|engine - 0.99^6| %.1e, |oracle - e^-0.06| %.1e, |r - sqrt2/2| %.1e (bound 1e-12)",
              e1, e2, e3)};
}

// 5 ---------------------------------------------------------------------------
Outcome gradient_integrity(bool full) {
  RunConfig cfg;
  cfg.history = 8;
  cfg.horizon = 4;
  cfg.k_spectral = 4;
  const std::vector<graph::Edge> e{{0, 1, 1.0}, {1, 2, 0.8}, {2, 3, 1.2}, {3, 0, 0.6}, {0, 2, 0.5}};
  const GraphContext g = GraphContext::build(graph::TrafficNetwork::from_edges(4, e), cfg);
  Model model(cfg);
  Rng rng(5005);
  Tensor x({2, 8, 4, cfg.input_channels()}), y({2, 4, 4});
  for (double& v : x.values()) v = rng.normal();
  for (double& v : y.values()) v = rng.normal();

  for (const char* name : {"diff.kappa_raw", "diff.capacity_raw", "sync.gamma_global_raw",
                           "enc.mem.alpha", "predict.consensus_raw"}) {
    if (!model.params().contains(name) || !model.params().get(name).trainable) {
      return {false, std::string("missing trainable parameter ") + name};
    }
  }
  const LossGraph loss = [&](ParamBinding& b) { return model.loss(model.forward(b, x, g), y).total; };
  FdOptions opt;
  opt.epsilon = 1e-5;
  opt.max_entries_per_tensor = full ? 0 : 24;
  opt.seed = 5;
  const FdReport r = finite_difference_report(model.params(), loss, opt);
  return {r.max_error <= 1e-4,
          fmt("max relative error %.2e over %.0f scalars in %.0f tensors, %.0f one-sided next to a "
              "kink, %.0f straddling (bound 1e-4)",
              r.max_error, static_cast<double>(r.probes), static_cast<double>(model.params().size()),
              static_cast<double>(r.one_sided), static_cast<double>(r.straddled))};
}

// 6 ---------------------------------------------------------------------------
Outcome overfit() {
  const auto t0 = std::chrono::steady_clock::now();
  data::SynthSpec spec;  // ring, 8 nodes, 2 days
  spec.noise_sigma = 0.05 * spec.amplitude;
  const data::SynthCity city = data::synth_generate(spec, 7);
  RunConfig cfg;
  const data::Range train = data::split_single_city(city.series.steps()).train;
  const data::PreparedSeries prep =
      data::prepare_series(city.series, city.network, cfg.history, cfg.augment_features, train);
  const data::WindowSet windows(prep, cfg.history, cfg.horizon, train, 12);
  Model model(cfg);
  const GraphContext g = GraphContext::build(city.network, cfg);
  const meta::BatchObjective obj = meta::model_objective(model, windows, g);

  meta::StageConfig stage;
  stage.name = "overfit";
  stage.epochs = 500;
  stage.patience = stage.epochs;
  stage.batch_size = cfg.batch_size;
  stage.adam = {cfg.pretrain_lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, cfg.weight_decay};
  stage.seed = 6006;
  meta::train_stage(model.params(), {&obj, windows.size(), nullptr, 0}, stage);
  const double mae = meta::window_mae(model, model.params(), windows, g);
  const double secs = seconds_since(t0);
  return {mae <= 0.15 && secs <= 300.0,
          fmt("training MAE %.4f (bound 0.15) on %.0f windows after 500 epochs, %.0f s (limit 300)", mae,
              static_cast<double>(windows.size()), secs)};
}

// 7 ---------------------------------------------------------------------------
struct City {
  std::optional<data::SynthCity> synth;
  data::PreparedSeries prep;
  std::optional<GraphContext> graph;
  std::optional<data::WindowSet> train;
  std::optional<data::WindowSet> test;
};

Outcome few_shot() {
  const auto t0 = std::chrono::steady_clock::now();
  RunConfig cfg;
  cfg.meta_steps = 50;
  Model model(cfg);
  const ParameterStore random_init = model.params();

  const data::Topology topologies[3] = {data::Topology::ring, data::Topology::grid,
                                        data::Topology::random_geometric};
  std::vector<std::unique_ptr<City>> cities;
  std::vector<meta::MetaCity> tasks;
  for (std::size_t i = 0; i < 3; ++i) {
    auto c = std::make_unique<City>();
    data::SynthSpec spec;
    spec.topology = topologies[i];
    c->synth.emplace(data::synth_generate(spec, 100 + i));
    const std::size_t steps = c->synth->series.steps();
    const data::Range fit{0, steps * 8 / 10};
    const data::Range held{fit.end, steps};
    c->prep = data::prepare_series(c->synth->series, c->synth->network, cfg.history,
                                   cfg.augment_features, fit);
    c->graph.emplace(GraphContext::build(c->synth->network, cfg));
    c->train.emplace(c->prep, cfg.history, cfg.horizon, fit);
    c->test.emplace(c->prep, cfg.history, cfg.horizon, held);
    tasks.push_back({meta::model_objective(model, *c->train, *c->graph), c->train->size()});
    cities.push_back(std::move(c));
  }
  meta::meta_train(model.params(), tasks, meta::MetaTrainConfig::from(cfg));

  // Episodes come from the held-out tail of each city.
  Rng rng(7007);
  const meta::InnerConfig inner{cfg.eval_inner_steps, cfg.inner_lr, cfg.clip_tau};
  double meta_mae = 0.0, random_mae = 0.0;
  const int episodes = 20;
  for (int e = 0; e < episodes; ++e) {
    const City& c = *cities[static_cast<std::size_t>(e) % 3];
    const meta::BatchObjective obj = meta::model_objective(model, *c.test, *c.graph);
    const meta::Episode ep =
        meta::sample_episode(c.test->size(), cfg.support_size, cfg.query_size, rng);
    ParameterStore from_meta = meta::inner_adapt(model.params(), obj, ep.support, inner, e);
    ParameterStore from_random = meta::inner_adapt(random_init, obj, ep.support, inner, e);
    meta_mae += meta::window_mae(model, from_meta, *c.test, *c.graph, ep.query);
    random_mae += meta::window_mae(model, from_random, *c.test, *c.graph, ep.query);
  }
  meta_mae /= episodes;
  random_mae /= episodes;
  const double reduction = 1.0 - meta_mae / random_mae;
  return {reduction >= 0.20,
          fmt("query MAE meta %.4f vs random init %.4f after 15 steps: %.1f%% lower (need 20%%), %.0f s",
              meta_mae, random_mae, 100.0 * reduction, seconds_since(t0))};
}

// 8 ---------------------------------------------------------------------------
Outcome determinism() {
  RunConfig cfg;
  cfg.hidden = 8;
  cfg.heads = 2;
  cfg.layers = 1;
  data::SynthSpec spec;
  spec.days = 0.5;
  const data::SynthCity city = data::synth_generate(spec, 8);
  const data::Range all{0, city.series.steps()};
  const data::PreparedSeries prep =
      data::prepare_series(city.series, city.network, cfg.history, cfg.augment_features, all);
  const data::WindowSet windows(prep, cfg.history, cfg.horizon, all, 4);
  const GraphContext g = GraphContext::build(city.network, cfg);

  auto trajectory = [&](Model& model) {
    const meta::BatchObjective obj = meta::model_objective(model, windows, g);
    AdamW opt({cfg.pretrain_lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, cfg.weight_decay});
    Rng rng(cfg.seed);
    std::vector<double> losses;
    std::vector<Tensor> grads;
    for (int step = 0; step < 10; ++step) {
      std::vector<std::size_t> ids(8);
      for (auto& id : ids) id = rng.index(windows.size());
      losses.push_back(obj(model.params(), ids, true, rng.next_u64()).total);
      for (const auto& p : model.params().all()) grads.push_back(p.grad);
      clip_global_norm(model.params(), cfg.clip_tau);
      opt.step(model.params());
    }
    return std::make_pair(losses, grads);
  };
  Model a(cfg), b(cfg);
  const auto ta = trajectory(a);
  const auto tb = trajectory(b);
  bool same_params = true;
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    same_params = same_params && a.params().all()[i].value == b.params().all()[i].value;
  }
  const bool same_traj = ta.first == tb.first && ta.second == tb.second && same_params;

  const std::filesystem::path path =
      std::filesystem::temp_directory_path() / ("mcpst_acceptance_" + std::to_string(::getpid()));
  const std::size_t ids[3] = {0, 5, 9};
  const Tensor x = windows.batch(ids).x;
  const Forecast before = a.predict(x, g);
  a.save(path);
  Model loaded = Model::load(path);
  const Forecast after = loaded.predict(x, g);
  std::filesystem::remove(path);
  const bool same_forecast = before.y_hat == after.y_hat && before.sigma2 == after.sigma2;
  return {same_traj && same_forecast,
          std::string("10-step losses/grads/params ") + (same_traj ? "bit-identical" : "DIFFER") +
              "; save/load forecasts " + (same_forecast ? "bit-identical" : "DIFFER")};
}

}  // namespace

int main(int argc, char** argv) {
  bool full_fd = false;
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--full-fd") {
      full_fd = true;
    } else {
      only.insert(std::atoi(a.c_str()));
    }
  }
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "validation suite", validation_suite},
      {2, "diffusion conservation", conservation},
      {3, "Kuramoto mean drift", mean_drift},
      {4, "closed-form checks", closed_forms},
      {5, "gradient integrity", [full_fd] { return gradient_integrity(full_fd); }},
      {6, "overfit smoke test", overfit},
      {7, "few-shot benefit", few_shot},
      {8, "determinism and serialization", determinism},
  };

  int failures = 0;
  for (const Criterion& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("[%s] %d %s: %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str());
    std::fflush(stdout);
  }
  if (only.empty() || only.count(9)) {
    std::printf("[N/A ] 9 benchmark tables: full-scale results on the real traffic datasets are "
                "reference values only and are not asserted\n");
  }
  return failures == 0 ? 0 : 1;
}
