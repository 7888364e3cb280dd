#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "mcpst/graphcore.hpp"

using namespace mcpst;
using namespace mcpst::graph;

TEST_CASE("two-node network from both edge directions") {
  const std::vector<Edge> e{{0, 1, 1.0}, {1, 0, 1.0}};
  const TrafficNetwork net = TrafficNetwork::from_edges(2, e);
  CHECK(net.adjacency() == Tensor({2, 2}, {0, 1, 1, 0}));
  CHECK_FALSE(net.directed());
}

TEST_CASE("network construction errors") {
  const std::vector<Edge> loop{{0, 0, 1.0}};
  CHECK_THROWS_AS(TrafficNetwork::from_edges(3, loop), GraphError);
  const std::vector<Edge> isolated{{0, 1, 1.0}};
  CHECK_THROWS_AS(TrafficNetwork::from_edges(3, isolated), GraphError);
  const std::vector<Edge> outside{{0, 5, 1.0}};
  CHECK_THROWS_AS(TrafficNetwork::from_edges(3, outside), GraphError);
}

TEST_CASE("duplicate edges sum; asymmetric input is symmetrised unless kept directed") {
  const std::vector<Edge> dup{{0, 1, 1.0}, {0, 1, 2.0}};
  const TrafficNetwork sym = TrafficNetwork::from_edges(2, dup);
  CHECK(mat(sym.adjacency(), 0, 1) == 1.5);
  CHECK(mat(sym.adjacency(), 1, 0) == 1.5);

  const std::vector<Edge> dir{{0, 1, 1.0}, {1, 2, 1.0}, {2, 0, 1.0}};
  const TrafficNetwork d = TrafficNetwork::from_edges(3, dir, true);
  CHECK(d.directed());
  CHECK_FALSE(laplacians(d).normalized.has_value());
}

TEST_CASE("laplacians of K2 and P3") {
  const LaplacianPair k2 = laplacians(test::k2());
  CHECK(k2.combinatorial == Tensor({2, 2}, {1, -1, -1, 1}));
  REQUIRE(k2.normalized);
  CHECK(*k2.normalized == Tensor({2, 2}, {1, -1, -1, 1}));

  const std::vector<Edge> p3{{0, 1, 1.0}, {1, 0, 1.0}, {1, 2, 1.0}, {2, 1, 1.0}};
  const LaplacianPair lp = laplacians(TrafficNetwork::from_edges(3, p3));
  CHECK(lp.combinatorial == Tensor({3, 3}, {1, -1, 0, -1, 2, -1, 0, -1, 1}));
}

TEST_CASE("combinatorial Laplacian rows sum to zero (property)") {
  Rng rng(21);
  for (int trial = 0; trial < 25; ++trial) {
    const TrafficNetwork net = test::random_connected(2 + rng.index(15), rng);
    const Tensor l = laplacians(net).combinatorial;
    for (std::size_t i = 0; i < net.n_nodes(); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < net.n_nodes(); ++j) s += mat(l, i, j);
      CHECK(std::abs(s) < 1e-12);
    }
  }
}

TEST_CASE("eigendecomposition of K2") {
  const SpectralBasis b = eigendecompose(laplacians(test::k2()), 2);
  CHECK(b.eigenvalues[0] == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(b.eigenvalues[1] == doctest::Approx(2.0).epsilon(1e-14));
  const double r = 1.0 / std::sqrt(2.0);
  CHECK(mat(b.eigenvectors, 0, 0) == doctest::Approx(r));
  CHECK(mat(b.eigenvectors, 1, 0) == doctest::Approx(r));
  CHECK(mat(b.eigenvectors, 0, 1) == doctest::Approx(r));
  CHECK(mat(b.eigenvectors, 1, 1) == doctest::Approx(-r));
  CHECK(b.gap == doctest::Approx(2.0));
}

TEST_CASE("cycle C4 spectrum") {
  const SpectralBasis b = eigendecompose(laplacians(test::cycle(4)), 4);
  const double expected[4] = {0.0, 1.0, 1.0, 2.0};
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(std::abs(b.eigenvalues[i] - expected[i]) < 1e-12);
  }
  CHECK(b.gap == doctest::Approx(1.0));
  CHECK_THROWS_AS(eigendecompose(laplacians(test::cycle(4)), 5), GraphError);
  CHECK_THROWS_AS(eigendecompose(laplacians(test::cycle(4)), 0), GraphError);
}

TEST_CASE("eigenvectors are orthonormal and diagonalise (property)") {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + rng.index(20);
    Tensor m({n, n});
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i; j < n; ++j) mat(m, i, j) = mat(m, j, i) = rng.normal();
    }
    const EigenDecomposition ed = symmetric_eigen(m);
    for (std::size_t a = 0; a < n; ++a) {
      if (a + 1 < n) CHECK(ed.values[a] <= ed.values[a + 1]);
      for (std::size_t b = 0; b < n; ++b) {
        double dot = 0.0, mv = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
          dot += mat(ed.vectors, r, a) * mat(ed.vectors, r, b);
          double row = 0.0;
          for (std::size_t c = 0; c < n; ++c) row += mat(m, r, c) * mat(ed.vectors, c, b);
          mv += mat(ed.vectors, r, a) * row;
        }
        CHECK(std::abs(dot - (a == b ? 1.0 : 0.0)) < 1e-10);
        CHECK(std::abs(mv - (a == b ? ed.values[a] : 0.0)) < 1e-9);
      }
    }
  }
}

TEST_CASE("normalised Laplacian spectrum lies in [0, 2] (property)") {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const TrafficNetwork net = test::random_connected(2 + rng.index(12), rng);
    const SpectralBasis b = eigendecompose(laplacians(net), 1);
    CHECK(std::abs(b.eigenvalues.front()) < 1e-10);
    CHECK(b.eigenvalues.back() <= 2.0 + 1e-10);
  }
}

TEST_CASE("non-symmetric input is rejected") {
  CHECK_THROWS_AS(symmetric_eigen(Tensor({2, 2}, {1, 2, 3, 4})), GraphError);
}
