#include <doctest.h>

#include <unistd.h>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "helpers.hpp"
#include "mcpst/dataio.hpp"

using namespace mcpst;
using namespace mcpst::data;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("mcpst_test_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir / name;
}

fs::path write_file(const std::string& name, const std::string& text) {
  const fs::path p = scratch(name);
  std::ofstream(p) << text;
  return p;
}

}  // namespace

TEST_CASE("timestamps") {
  CHECK(parse_timestamp("2024-01-01 00:05") - parse_timestamp("2024-01-01 00:00") == 5.0);
  CHECK(parse_timestamp("2024-01-02T00:00:00") - parse_timestamp("2024-01-01 00:00:00") == 1440.0);
  CHECK(parse_timestamp("15") == 15.0);
  CHECK(format_timestamp(parse_timestamp("2024-03-05 13:45:00")) == "2024-03-05 13:45:00");
  CHECK_THROWS_AS(parse_timestamp("yesterday"), DataError);
}

TEST_CASE("series CSV loads and rejects bad files") {
  const auto ok = load_series(write_file("ok.csv",
                                         "timestamp,node0,node1\n"
                                         "2024-01-01 00:00,1,2\n"
                                         "2024-01-01 00:05,3,4\n"
                                         "2024-01-01 00:10,5,6\n"));
  CHECK(ok.values.shape() == Shape{3, 2});
  CHECK(ok.values.at({2, 1}) == 6.0);
  CHECK(ok.interval_minutes == 5.0);

  CHECK_THROWS_AS(load_series(write_file("shuffled.csv",
                                         "timestamp,node0\n"
                                         "2024-01-01 00:05,1\n"
                                         "2024-01-01 00:00,2\n")),
                  DataError);
  try {
    load_series(write_file("missing.csv", "timestamp,node0,node1\n0,1,\n5,,2\n"));
    FAIL("expected DataError");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("row 1") != std::string::npos);
    CHECK(msg.find("node1") != std::string::npos);
  }
  CHECK_THROWS_AS(load_series(write_file("uneven.csv", "timestamp,node0\n0,1\n5,1\n20,1\n")),
                  DataError);
  CHECK_THROWS_AS(load_series(scratch("does_not_exist.csv")), DataError);

  const auto one = load_series(write_file("one.csv", "timestamp,node0\n0,1\n"));
  CHECK(one.steps() == 1);
  CHECK_THROWS(window_count(one.steps(), 12, 12));
}

TEST_CASE("series and edges round-trip through CSV") {
  SynthSpec spec;
  spec.days = 0.25;
  const SynthCity city = synth_generate(spec, 3);
  save_series(scratch("rt.csv"), city.series);
  save_edges(scratch("rt_edges.csv"), city.network);
  const TrafficSeries back = load_series(scratch("rt.csv"));
  CHECK(back.values.shape() == city.series.values.shape());
  CHECK(test::max_abs_diff(back.values, city.series.values) < 1e-6);
  CHECK(back.start_minutes == city.series.start_minutes);
  const auto edges = load_edges(scratch("rt_edges.csv"));
  const auto net = graph::TrafficNetwork::from_edges(city.network.n_nodes(), edges);
  CHECK(net.adjacency() == city.network.adjacency());
}

TEST_CASE("z-score statistics") {
  const Tensor v({4, 1}, {1.0, 3.0, 100.0, 100.0});
  const ZScore z = fit_zscore(v, {0, 2});
  CHECK(z.mean == 2.0);
  CHECK(z.std == 1.0);
  CHECK(z.normalize(Tensor({1}, {2.0}))[0] == 0.0);
  const Tensor x({3}, {-1.5, 0.0, 7.25});
  CHECK(test::max_abs_diff(z.denormalize(z.normalize(x)), x) < 1e-15);
  CHECK_THROWS_AS(fit_zscore(Tensor({3, 2}, 4.0), {0, 3}), DataError);
  CHECK_THROWS_AS(fit_zscore(v, {2, 9}), DataError);
}

TEST_CASE("augmented features") {
  const auto net = test::k2();
  const Tensor f = augment_features(Tensor({1, 2}, {1.0, 3.0}), net, 12, FeatureStats{});
  CHECK(f.shape() == Shape{1, 2, 4});
  CHECK(f.at({0, 0, 2}) == 3.0);
  CHECK(f.at({0, 1, 2}) == 1.0);

  const Tensor c = augment_features(Tensor({5, 2}, 7.0), net, 3, FeatureStats{});
  for (std::size_t t = 0; t < 5; ++t) {
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(c.at({t, i, 1}) == 0.0);
      CHECK(c.at({t, i, 3}) == 0.0);
    }
  }
  const Tensor r = rolling_variance(Tensor({3, 1}, {0.0, 2.0, 4.0}), 2);
  CHECK(r[0] == 0.0);
  CHECK(r[1] == 1.0);
  CHECK(r[2] == 1.0);
}

TEST_CASE("window counts") {
  CHECK(window_count(24, 12, 12) == 1);
  CHECK(window_count(25, 12, 12) == 2);
  CHECK_THROWS_AS(window_count(23, 12, 12), DataError);
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t l = 1 + rng.index(20), h = 1 + rng.index(20);
    const std::size_t t = l + h + rng.index(50);
    CHECK(window_count(t, l, h) == t - l - h + 1);
    const Tensor in({t, 1, 1}), tg({t, 1});
    CHECK(make_windows(in, tg, l, h).size() == t - l - h + 1);
  }
}

TEST_CASE("windows carry the right rows") {
  const std::size_t t = 30;
  Tensor in({t, 2, 1}), tg({t, 2});
  for (std::size_t s = 0; s < t; ++s) {
    for (std::size_t i = 0; i < 2; ++i) {
      in[s * 2 + i] = static_cast<double>(s * 10 + i);
      tg[s * 2 + i] = -static_cast<double>(s * 10 + i);
    }
  }
  const auto w = make_windows(in, tg, 4, 3);
  CHECK(w[5].start_index == 5);
  CHECK(w[5].x.at({0, 1, 0}) == 51.0);
  CHECK(w[5].y.at({0, 0}) == -90.0);

  const PreparedSeries p{in, tg, {}, {}};
  const WindowSet set(p, 4, 3, {10, 30}, 2);
  CHECK(set.size() == 7);
  CHECK(set.starts()[1] == 12);
  const std::size_t ids[1] = {1};
  const Batch b = set.batch(ids);
  CHECK(b.x.shape() == Shape{1, 4, 2, 1});
  CHECK(b.y.shape() == Shape{1, 2, 3});
  CHECK(b.x.at({0, 0, 0, 0}) == 120.0);
  CHECK(b.y.at({0, 1, 2}) == -(18 * 10 + 1));
}

TEST_CASE("chronological splits") {
  const SplitRanges s = split_single_city(1000);
  CHECK(s.train.size() == 700);
  CHECK(s.val.size() == 100);
  CHECK(s.test.size() == 200);
  CHECK(s.val.begin == s.train.end);
  CHECK(split_target_city(2000, 5.0, 3.0).adapt.size() == 864);
  CHECK(split_target_city(2000, 10.0, 3.0).adapt.size() == 432);
  CHECK_THROWS_AS(split_target_city(800, 5.0, 3.0), DataError);
  const auto [fit, hold] = holdout_tail({0, 100}, 0.1);
  CHECK(fit.end == 90);
  CHECK(hold.begin == 90);
  CHECK(hold.end == 100);
}

TEST_CASE("prepared series are normalized with training statistics") {
  SynthSpec spec;
  const SynthCity city = synth_generate(spec, 5);
  const Range train = split_single_city(city.series.steps()).train;
  const PreparedSeries p = prepare_series(city.series, city.network, 12, true, train);
  CHECK(p.inputs.shape() == Shape{city.series.steps(), 8, 5});
  double mean = 0.0;
  for (std::size_t t = train.begin; t < train.end; ++t) {
    for (std::size_t i = 0; i < 8; ++i) mean += mat(p.targets, t, i);
  }
  CHECK(std::abs(mean / (train.size() * 8)) < 1e-12);
  const PreparedSeries again = prepare_series(city.series, city.network, 12, true, p.scale, p.features);
  CHECK(again.inputs == p.inputs);
  const PreparedSeries plain = prepare_series(city.series, city.network, 12, false, train);
  CHECK(plain.inputs.dim(2) == 1);
}

TEST_CASE("synthetic cities") {
  SynthSpec spec;
  const SynthCity ring = synth_generate(spec, 1);
  CHECK(ring.series.values.shape() == Shape{576, 8});
  CHECK(ring.network.n_nodes() == 8);
  CHECK(ring.series.values.all_finite());
  CHECK(synth_generate(spec, 1).series.values == ring.series.values);
  CHECK_FALSE(synth_generate(spec, 2).series.values == ring.series.values);

  SynthSpec flat;
  flat.noise_sigma = 0.0;
  flat.amplitude = 0.0;
  flat.pulses_per_day = 0.0;
  for (double v : synth_generate(flat, 4).series.values.values()) CHECK(v == spec.base_level);

  for (Topology t : {Topology::grid, Topology::random_geometric}) {
    SynthSpec s;
    s.topology = t;
    s.n_nodes = 11;
    s.days = 0.5;
    const SynthCity c = synth_generate(s, 6);
    CHECK(c.network.n_nodes() == 11);
    CHECK(c.series.values.shape() == Shape{144, 11});
  }

  const SynthSpec parsed = SynthSpec::parse(spec.to_text());
  CHECK(parsed.to_text() == spec.to_text());
  CHECK_THROWS(SynthSpec::parse("bogus = 1\n"));
}
