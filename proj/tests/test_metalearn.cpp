#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "helpers.hpp"
#include "mcpst/metalearn.hpp"

using namespace mcpst;
using namespace mcpst::meta;

namespace {

/// Window i pulls the parameter vector toward target i: loss = mean_i |w - t_i|^2.
struct QuadraticTask {
  std::vector<Tensor> targets;

  BatchObjective objective() const {
    return [this](ParameterStore& ps, std::span<const std::size_t> ids, bool grad, std::uint64_t) {
      const Tensor& w = ps.get("w").value;
      Tensor g(w.shape());
      double loss = 0.0;
      for (std::size_t id : ids) {
        for (std::size_t k = 0; k < w.size(); ++k) {
          const double r = w[k] - targets.at(id)[k];
          loss += r * r;
          g[k] += 2.0 * r;
        }
      }
      const double inv = 1.0 / static_cast<double>(ids.size());
      if (grad) {
        for (double& x : g.values()) x *= inv;
        ps.get("w").grad = g;
      }
      return LossValue{loss * inv, loss * inv, 0.0};
    };
  }
};

QuadraticTask make_task(std::size_t n, Rng& rng) {
  QuadraticTask t;
  for (std::size_t i = 0; i < n; ++i) t.targets.push_back(test::random_tensor({3}, rng));
  return t;
}

ParameterStore start_params(Rng& rng) {
  ParameterStore ps;
  ps.add("w", test::random_tensor({3}, rng));
  return ps;
}

}  // namespace

TEST_CASE("episodes partition exactly K + Q windows") {
  Rng rng(1);
  const Episode e = sample_episode(28, 12, 16, rng);
  CHECK(e.support.size() == 12);
  CHECK(e.query.size() == 16);
  std::set<std::size_t> all(e.support.begin(), e.support.end());
  all.insert(e.query.begin(), e.query.end());
  CHECK(all.size() == 28);
  CHECK(*all.rbegin() == 27);

  Rng a(9), b(9);
  const Episode ea = sample_episode(100, 12, 16, a, 2);
  const Episode eb = sample_episode(100, 12, 16, b, 2);
  CHECK(ea.support == eb.support);
  CHECK(ea.query == eb.query);
  CHECK(ea.scenario_id == 2);
  CHECK_THROWS(sample_episode(27, 12, 16, rng));
}

TEST_CASE("support and query are disjoint (property)") {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 1 + rng.index(10), q = 1 + rng.index(10);
    const std::size_t n = k + q + rng.index(40);
    const Episode e = sample_episode(n, k, q, rng);
    std::set<std::size_t> s(e.support.begin(), e.support.end());
    CHECK(s.size() == k);
    for (std::size_t id : e.query) {
      CHECK(s.count(id) == 0);
      CHECK(id < n);
    }
  }
}

TEST_CASE("inner adaptation") {
  Rng rng(3);
  const QuadraticTask task = make_task(10, rng);
  const BatchObjective obj = task.objective();
  const ParameterStore theta = start_params(rng);
  const std::size_t support[3] = {0, 1, 2};
  const ParameterStore same = inner_adapt(theta, obj, support, {0, 0.1, 1.0}, 0);
  CHECK(same.get("w").value == theta.get("w").value);

  ParameterStore moved = inner_adapt(theta, obj, support, {20, 0.1, 10.0}, 0);
  ParameterStore original = theta;
  CHECK(obj(moved, support, false, 0).total < obj(original, support, false, 0).total);
  CHECK_FALSE(moved.get("w").value == theta.get("w").value);
}

TEST_CASE("outer update without inner steps is AdamW on the query loss") {
  Rng rng(4);
  const QuadraticTask task = make_task(10, rng);
  const BatchObjective obj = task.objective();
  ParameterStore theta = start_params(rng);
  ParameterStore reference = theta;

  Episode e;
  e.support = {0, 1};
  e.query = {2, 3, 4};
  const EpisodeTask tasks[1] = {{&obj, e}};
  AdamW opt({1e-2, 0.9, 0.999, 1e-8, 0.0});
  outer_update(theta, tasks, {0, 0.1, 1.0}, opt, 1.0, 1e9, 0);

  AdamW ref_opt({1e-2, 0.9, 0.999, 1e-8, 0.0});
  obj(reference, e.query, true, 0);
  ref_opt.step(reference);
  CHECK(theta.get("w").value == reference.get("w").value);
}

TEST_CASE("two identical episodes give the same update as one") {
  Rng rng(5);
  const QuadraticTask task = make_task(10, rng);
  const BatchObjective obj = task.objective();
  ParameterStore a = start_params(rng);
  ParameterStore b = a;
  Episode e;
  e.support = {0, 1, 2};
  e.query = {5, 6};
  const EpisodeTask one[1] = {{&obj, e}};
  const EpisodeTask two[2] = {{&obj, e}, {&obj, e}};
  AdamW oa, ob;
  const InnerConfig inner{3, 0.05, 1.0};
  outer_update(a, one, inner, oa, 1.0, 1.0, 7);
  outer_update(b, two, inner, ob, 1.0, 1.0, 7);
  CHECK(test::max_abs_diff(a.get("w").value, b.get("w").value) < 1e-15);
}

TEST_CASE("episodes with non-finite losses are skipped") {
  Rng rng(6);
  const QuadraticTask task = make_task(6, rng);
  const BatchObjective good = task.objective();
  const BatchObjective bad = [](ParameterStore&, std::span<const std::size_t>, bool,
                                std::uint64_t) -> LossValue {
    throw ad::NumericError("log produced NaN");
  };
  ParameterStore theta = start_params(rng);
  Episode e;
  e.support = {0};
  e.query = {1};
  const EpisodeTask tasks[2] = {{&good, e}, {&bad, e}};
  AdamW opt;
  const OuterResult r = outer_update(theta, tasks, {1, 0.1, 1.0}, opt, 1.0, 1.0, 0);
  CHECK(r.failed_episodes == 1);
  CHECK(std::isfinite(r.query.total));
}

TEST_CASE("early stopping respects min_delta") {
  EarlyStopping s(3, 1e-5);
  CHECK(s.observe(1.0));
  CHECK_FALSE(s.observe(1.0 - 5e-6));
  CHECK(s.bad_epochs() == 1);
  CHECK(s.best() == 1.0);
  CHECK(s.observe(1.0 - 2e-5));
  CHECK(s.bad_epochs() == 0);
  CHECK_FALSE(s.observe(2.0));
  CHECK_FALSE(s.observe(2.0));
  CHECK_FALSE(s.exhausted());
  CHECK_FALSE(s.observe(2.0));
  CHECK(s.exhausted());
}

TEST_CASE("training stops when patience runs out and restores the best epoch") {
  Rng rng(7);
  const QuadraticTask task = make_task(8, rng);
  const BatchObjective train = task.objective();
  const std::vector<double> val_curve{5, 4, 3, 3.5, 3.6, 3.7, 1.0, 1.0};
  std::size_t calls = 0;
  std::vector<Tensor> snapshots;
  const BatchObjective val = [&](ParameterStore& ps, std::span<const std::size_t>, bool,
                                 std::uint64_t) {
    snapshots.push_back(ps.get("w").value);
    const double v = val_curve.at(calls++);
    return LossValue{v, v, 0.0};
  };
  ParameterStore ps = start_params(rng);
  StageConfig cfg;
  cfg.epochs = 8;
  cfg.patience = 3;
  cfg.batch_size = 8;
  cfg.adam.lr = 0.01;
  const StageResult r = train_stage(ps, {&train, 8, &val, 1}, cfg);
  CHECK(r.epochs_run == 6);
  CHECK(r.stopped_early);
  CHECK(r.best_epoch == 3);
  CHECK(r.best_monitor == 3.0);
  CHECK(ps.get("w").value == snapshots[2]);
  CHECK(r.log.size() == 6);
}

TEST_CASE("zero-epoch stage returns the initial parameters") {
  Rng rng(8);
  const QuadraticTask task = make_task(4, rng);
  const BatchObjective train = task.objective();
  ParameterStore ps = start_params(rng);
  const Tensor before = ps.get("w").value;
  StageConfig cfg;
  cfg.epochs = 0;
  const StageResult r = train_stage(ps, {&train, 4, nullptr, 0}, cfg);
  CHECK(r.epochs_run == 0);
  CHECK(ps.get("w").value == before);

  RunConfig rc;
  rc.pretrain_epochs = 0;
  rc.finetune_epochs = 0;
  two_stage_train(ps, {&train, 4, nullptr, 0}, {&train, 4, nullptr, 0}, rc);
  CHECK(ps.get("w").value == before);
}

TEST_CASE("training reduces a quadratic objective deterministically") {
  Rng rng(9);
  const QuadraticTask task = make_task(16, rng);
  const BatchObjective train = task.objective();
  ParameterStore a = start_params(rng);
  ParameterStore b = a;
  StageConfig cfg;
  cfg.epochs = 30;
  cfg.batch_size = 4;
  cfg.adam.lr = 0.05;
  cfg.seed = 3;
  const StageResult ra = train_stage(a, {&train, 16, nullptr, 0}, cfg);
  const StageResult rb = train_stage(b, {&train, 16, nullptr, 0}, cfg);
  CHECK(a.get("w").value == b.get("w").value);
  CHECK(ra.log.back().train_loss < ra.log.front().train_loss);
  CHECK(ra.log.back().train_loss == rb.log.back().train_loss);
}

TEST_CASE("meta training logs one row per step") {
  Rng rng(10);
  const QuadraticTask t1 = make_task(30, rng), t2 = make_task(30, rng);
  const MetaCity cities[2] = {{t1.objective(), 30}, {t2.objective(), 30}};
  ParameterStore ps = start_params(rng);
  MetaTrainConfig cfg;
  cfg.meta_steps = 5;
  cfg.meta_batch = 2;
  cfg.support_size = 4;
  cfg.query_size = 4;
  cfg.inner = {2, 0.05, 1.0};
  cfg.outer.lr = 0.01;
  const auto log = meta_train(ps, cities, cfg);
  CHECK(log.size() == 5);
  CHECK(log[0].stage == "meta");
  CHECK(std::isnan(log[0].val_loss));
}
