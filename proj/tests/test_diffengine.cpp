#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "mcpst/diffengine.hpp"
#include "mcpst/gradcheck.hpp"
#include "mcpst/validation.hpp"

using namespace mcpst;
using namespace mcpst::diffusion;
namespace ad = mcpst::ad;

namespace {

DiffusionState run_k2(std::size_t k_steps) {
  DiffusionConfig cfg;
  cfg.k_steps = k_steps;
  const DiffusionState s0{ad::constant(Tensor({1, 2, 1}, {1.0, 0.0})), 0};
  return run_diffusion(s0, graph::laplacians(test::k2()).combinatorial,
                       ad::constant(Tensor::scalar(0.3)), ad::constant(Tensor::scalar(1.0)), cfg);
}

}  // namespace

TEST_CASE("source estimator with zero parameters") {
  Rng rng(1);
  ParameterStore ps;
  register_params(ps, rng, 4, 3);
  test::zero_params(ps, "diff.q");
  ParamBinding bind(ps, false);
  const ad::Var f = ad::constant(test::random_tensor({2, 3, 4}, rng));
  const ad::Var s = estimate_sources(bind, f);
  CHECK(s.shape() == Shape{2, 3, 1});
  for (double v : s.value().values()) CHECK(v == 0.5);

  ps.get("diff.q2.b").value[0] = 1.5;
  ParamBinding bind2(ps, false);
  const ad::Var s2 = estimate_sources(bind2, f);
  for (double v : s2.value().values()) {
    CHECK(v == doctest::Approx(1.0 / (1.0 + std::exp(-1.5))));
  }
}

TEST_CASE("sources lie in (0, 1) for random parameters") {
  Rng rng(2);
  ParameterStore ps;
  register_params(ps, rng, 6, 3);
  ParamBinding bind(ps, false);
  const ad::Var s = estimate_sources(bind, ad::constant(test::random_tensor({3, 5, 6}, rng, 3.0)));
  for (double v : s.value().values()) CHECK((v > 0.0 && v < 1.0));
}

TEST_CASE("initial state scales features by source") {
  const ad::Var f = ad::constant(Tensor({1, 1, 2}, {1.0, 2.0}));
  CHECK(init_state(f, ad::constant(Tensor({1, 1, 1}, 1.0))).t_state.value() == f.value());
  CHECK(init_state(f, ad::constant(Tensor({1, 1, 1}, 0.5))).t_state.value() ==
        Tensor({1, 1, 2}, {0.5, 1.0}));
  CHECK(init_state(ad::constant(Tensor({1, 1, 2})), ad::constant(Tensor({1, 1, 1}, 0.7)))
            .t_state.value() == Tensor({1, 1, 2}));
  CHECK_THROWS_AS(init_state(f, ad::constant(Tensor({1, 2, 1}, 0.5))), ShapeError);
}

TEST_CASE("K2 heat steps decay the difference by 0.99 per step") {
  const DiffusionState s = run_k2(6);
  CHECK(s.step_index == 6);
  const Tensor& t = s.t_state.value();
  const double ratio = std::pow(0.99, 6);
  CHECK(std::abs((t[0] - t[1]) - ratio) < 1e-12);
  CHECK(t[0] == doctest::Approx(0.970740).epsilon(1e-6));
  CHECK(t[1] == doctest::Approx(0.029260).epsilon(1e-5));
  CHECK(std::abs(t[0] + t[1] - 1.0) < 1e-15);
}

TEST_CASE("kappa and capacity are clipped to their ranges") {
  DiffusionConfig cfg;
  const Tensor lap = graph::laplacians(test::k2()).combinatorial;
  const DiffusionState s0{ad::constant(Tensor({1, 2, 1}, {1.0, 0.0})), 0};
  const DiffusionState a = run_diffusion(s0, lap, ad::constant(Tensor::scalar(5.0)),
                                         ad::constant(Tensor::scalar(1.0)), cfg);
  const DiffusionState b = run_diffusion(s0, lap, ad::constant(Tensor::scalar(0.3)),
                                         ad::constant(Tensor::scalar(1.0)), cfg);
  CHECK(a.t_state.value() == b.t_state.value());
  const DiffusionState c = run_diffusion(s0, lap, ad::constant(Tensor::scalar(0.3)),
                                         ad::constant(Tensor::scalar(0.01)), cfg);
  const DiffusionState d = run_diffusion(s0, lap, ad::constant(Tensor::scalar(0.3)),
                                         ad::constant(Tensor::scalar(0.5)), cfg);
  CHECK(c.t_state.value() == d.t_state.value());
}

TEST_CASE("node sum is conserved on random graphs (property)") {
  Rng rng(17);
  DiffusionConfig cfg;
  for (int trial = 0; trial < 30; ++trial) {
    const auto net = test::random_connected(2 + rng.index(15), rng);
    const std::size_t n = net.n_nodes();
    const Tensor t0 = test::random_tensor({2, n, 3}, rng);
    const DiffusionState s = run_diffusion({ad::constant(t0), 0}, graph::laplacians(net).combinatorial,
                                           ad::constant(Tensor::scalar(rng.uniform(0.01, 0.3))),
                                           ad::constant(Tensor::scalar(rng.uniform(0.5, 2.0))), cfg);
    for (std::size_t b = 0; b < 2; ++b) {
      for (std::size_t d = 0; d < 3; ++d) {
        double before = 0.0, after = 0.0, scale = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          before += t0[(b * n + i) * 3 + d];
          after += s.t_state.value()[(b * n + i) * 3 + d];
          scale += std::abs(t0[(b * n + i) * 3 + d]);
        }
        CHECK(std::abs(after - before) <= 1e-9 * std::max(1.0, scale));
      }
    }
  }
}

TEST_CASE("stability check reports the step bound") {
  DiffusionConfig cfg;
  CHECK_NOTHROW(check_stability(cfg, 4.0));
  try {
    check_stability(cfg, 1e4);
    FAIL("expected a stability error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("dt") != std::string::npos);
  }
}

TEST_CASE("engine matches the heat oracle to first order") {
  const auto net = test::cycle(6);
  const Tensor lap = graph::laplacians(net).combinatorial;
  Tensor u0({6, 1});
  u0[0] = 1.0;
  const Tensor exact = validation::heat_oracle(lap, u0, 0.3, 1.0, 0.1);
  DiffusionConfig cfg;
  cfg.k_steps = 64;
  const DiffusionState s = run_diffusion({ad::constant(u0.reshaped({1, 6, 1})), 0}, lap,
                                         ad::constant(Tensor::scalar(0.3)),
                                         ad::constant(Tensor::scalar(1.0)), cfg);
  CHECK(test::max_abs_diff(s.t_state.value(), exact) < 1e-4);
}

TEST_CASE("flow head shape and zero output") {
  Rng rng(3);
  ParameterStore ps;
  register_params(ps, rng, 4, 12);
  test::zero_params(ps, "diff.f");
  ParamBinding bind(ps, false);
  const DiffusionState s{ad::constant(test::random_tensor({1, 2, 4}, rng)), 6};
  const ad::Var v = diffusion_predict(bind, s);
  CHECK(v.shape() == Shape{1, 2, 12});
  for (double x : v.value().values()) CHECK(x == 0.0);
}

TEST_CASE("diffusion gradients match finite differences") {
  Rng rng(4);
  ParameterStore ps;
  register_params(ps, rng, 3, 2);
  const Tensor f = test::random_tensor({2, 4, 3}, rng);
  const Tensor lap = graph::laplacians(test::cycle(4)).combinatorial;
  const LossGraph g = [&](ParamBinding& b) {
    const ad::Var fv = ad::constant(f);
    DiffusionState s = init_state(fv, estimate_sources(b, fv));
    s = run_diffusion(s, lap, b("diff.kappa_raw"), b("diff.capacity_raw"), DiffusionConfig{});
    return ad::sum_all(ad::square(diffusion_predict(b, s)));
  };
  CHECK(finite_difference_check(ps, g) <= 1e-6);
}
