#pragma once

#include <cmath>
#include <vector>

#include "mcpst/graphcore.hpp"
#include "mcpst/rng.hpp"
#include "mcpst/tensor.hpp"

namespace test {

inline mcpst::Tensor random_tensor(mcpst::Shape shape, mcpst::Rng& rng, double scale = 1.0) {
  mcpst::Tensor t(std::move(shape));
  for (double& v : t.values()) v = scale * rng.normal();
  return t;
}

/// Adds the mirror of every edge so the network is built with the listed weights.
inline std::vector<mcpst::graph::Edge> both_ways(std::vector<mcpst::graph::Edge> e) {
  const std::size_t m = e.size();
  for (std::size_t k = 0; k < m; ++k) e.push_back({e[k].dst, e[k].src, e[k].weight});
  return e;
}

inline mcpst::graph::TrafficNetwork k2() {
  return mcpst::graph::TrafficNetwork::from_edges(2, both_ways({{0, 1, 1.0}}));
}

inline mcpst::graph::TrafficNetwork cycle(std::size_t n, double w = 1.0) {
  std::vector<mcpst::graph::Edge> e;
  for (std::size_t i = 0; i < n; ++i) e.push_back({i, (i + 1) % n, w});
  return mcpst::graph::TrafficNetwork::from_edges(n, both_ways(std::move(e)));
}

/// Connected random graph: a random spanning path plus extra edges with probability p.
inline mcpst::graph::TrafficNetwork random_connected(std::size_t n, mcpst::Rng& rng,
                                                     double p = 0.3) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);
  std::vector<mcpst::graph::Edge> e;
  for (std::size_t i = 1; i < n; ++i) e.push_back({order[i - 1], order[i], rng.uniform(0.2, 1.0)});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (rng.uniform() < p) e.push_back({i, j, rng.uniform(0.2, 1.0)});
    }
  }
  return mcpst::graph::TrafficNetwork::from_edges(n, both_ways(std::move(e)));
}

inline double max_abs_diff(const mcpst::Tensor& a, const mcpst::Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace test

#include "mcpst/params.hpp"

namespace test {

/// Zeroes every parameter whose name starts with `prefix`.
inline void zero_params(mcpst::ParameterStore& store, std::string_view prefix) {
  for (auto& p : store.all()) {
    if (p.name.starts_with(prefix)) p.value.fill(0.0);
  }
}

}  // namespace test
