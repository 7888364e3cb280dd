#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "mcpst/fusion.hpp"
#include "mcpst/gradcheck.hpp"
#include "mcpst/layers.hpp"

using namespace mcpst;
using namespace mcpst::fusion;
namespace ad = mcpst::ad;

namespace {

PhaseBundle random_bundle(Rng& rng, std::size_t b, std::size_t n, std::size_t d) {
  PhaseBundle p;
  p.f_diff = ad::constant(test::random_tensor({b, n, d}, rng));
  p.f_sync = ad::constant(test::random_tensor({b, n, d + 2}, rng));
  p.f_spec = ad::constant(test::random_tensor({b, n, d / 4}, rng));
  return p;
}

}  // namespace

TEST_CASE("attention weights at zero parameters are uniform") {
  Rng rng(1);
  ParameterStore ps;
  register_params(ps, rng, 8);
  test::zero_params(ps, "fusion.alpha");
  ParamBinding bind(ps, false);
  const ad::Var a = attention_weights(bind, random_bundle(rng, 2, 3, 8).concatenated());
  CHECK(a.shape() == Shape{2, 3, 3});
  for (double v : a.value().values()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("attention weights from hand-set logits") {
  Rng rng(2);
  ParameterStore ps;
  register_params(ps, rng, 8);
  test::zero_params(ps, "fusion.alpha");
  ps.get("fusion.alpha2.b").value[0] = std::log(2.0);
  ParamBinding bind(ps, false);
  const Tensor a = attention_weights(bind, random_bundle(rng, 1, 1, 8).concatenated()).value();
  CHECK(a[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(a[1] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(a[2] == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("attention weights lie on the simplex (property)") {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    ParameterStore ps;
    Rng init(100 + trial);
    register_params(ps, init, 8);
    ParamBinding bind(ps, false);
    const Tensor a =
        attention_weights(bind, random_bundle(rng, 2, 4, 8).concatenated()).value();
    for (std::size_t r = 0; r < 8; ++r) {
      const double s = a[3 * r] + a[3 * r + 1] + a[3 * r + 2];
      CHECK(std::abs(s - 1.0) < 1e-12);
      for (std::size_t c = 0; c < 3; ++c) CHECK(a[3 * r + c] >= 0.0);
    }
  }
}

TEST_CASE("one-hot weight selects the projected diffusion block") {
  Rng rng(4);
  ParameterStore ps;
  register_params(ps, rng, 8);
  const PhaseBundle bundle = random_bundle(rng, 1, 2, 8);
  Tensor one_hot({1, 2, 3});
  one_hot[0] = one_hot[3] = 1.0;
  ParamBinding bind(ps, false);
  const Tensor w = weighted_combine(bind, bundle, ad::constant(one_hot)).value();
  const Tensor expected = layers::dense(bind, "fusion.proj_diff", bundle.f_diff).value();
  CHECK(w.shape() == Shape{1, 2, total_width(8)});
  CHECK(test::max_abs_diff(w, expected) < 1e-15);
}

TEST_CASE("uniform weights over identical projections return the projection") {
  Rng rng(5);
  ParameterStore ps;
  register_params(ps, rng, 4);
  // Project each block to the same constant X by zeroing weights and sharing a bias.
  test::zero_params(ps, "fusion.proj");
  const Tensor x = test::random_tensor({total_width(4)}, rng);
  for (const char* p : {"fusion.proj_diff.b", "fusion.proj_sync.b", "fusion.proj_spec.b"}) {
    ps.get(p).value = x;
  }
  ParamBinding bind(ps, false);
  const ad::Var alpha = ad::constant(Tensor({1, 1, 3}, 1.0 / 3.0));
  const Tensor w = weighted_combine(bind, random_bundle(rng, 1, 1, 4), alpha).value();
  CHECK(test::max_abs_diff(w, x) < 1e-15);
}

TEST_CASE("zero fuse parameters pass the diffusion state through") {
  Rng rng(6);
  ParameterStore ps;
  register_params(ps, rng, 8);
  test::zero_params(ps, "fusion.fuse");
  ParamBinding bind(ps, false);
  const Tensor t = test::random_tensor({2, 3, 8}, rng);
  const ad::Var out = residual_fuse(
      bind, ad::constant(test::random_tensor({2, 3, total_width(8)}, rng)), ad::constant(t));
  CHECK(out.value() == t);
}

TEST_CASE("fusion gradients match finite differences") {
  Rng rng(7);
  ParameterStore ps;
  register_params(ps, rng, 4);
  const PhaseBundle bundle = random_bundle(rng, 2, 3, 4);
  const Tensor t = test::random_tensor({2, 3, 4}, rng);
  const LossGraph g = [&](ParamBinding& b) {
    const ad::Var alpha = attention_weights(b, bundle.concatenated());
    return ad::sum_all(ad::square(residual_fuse(b, weighted_combine(b, bundle, alpha), ad::constant(t))));
  };
  CHECK(finite_difference_check(ps, g) <= 1e-6);
}
