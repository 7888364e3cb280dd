#include <doctest.h>

#include <cmath>
#include <sstream>

#include "helpers.hpp"
#include "mcpst/validation.hpp"

using namespace mcpst;
using namespace mcpst::validation;

TEST_CASE("heat oracle on K2") {
  const Tensor lap = graph::laplacians(test::k2()).combinatorial;
  const Tensor u = heat_oracle(lap, Tensor({2, 1}, {1.0, 0.0}), 0.3, 1.0, 0.1);
  CHECK(std::abs((u[0] - u[1]) - std::exp(-0.06)) < 1e-12);
  CHECK(u[0] == doctest::Approx(0.970882).epsilon(1e-6));
  CHECK(u[1] == doctest::Approx(0.029118).epsilon(1e-5));
  const Tensor u0({2, 1}, {0.25, -3.0});
  CHECK(test::max_abs_diff(heat_oracle(lap, u0, 0.3, 1.0, 0.0), u0) < 1e-15);
  const Tensor c({2, 1}, 4.0);
  CHECK(test::max_abs_diff(heat_oracle(lap, c, 0.3, 1.0, 5.0), c) < 1e-14);
}

TEST_CASE("Kuramoto oracle") {
  const Tensor a = test::cycle(5).adjacency();
  const std::vector<double> phi(5, 0.8), nu(5, 0.0);
  for (double v : kuramoto_oracle(a, phi, nu, 0.7, 3.0, 100)) CHECK(v == doctest::Approx(0.8));
  // Uncoupled: exact linear drift.
  const std::vector<double> p0{0.0, 1.0}, w{0.5, -0.25};
  const auto out = kuramoto_oracle(test::k2().adjacency(), p0, w, 0.0, 2.0, 10);
  CHECK(out[0] == doctest::Approx(1.0));
  CHECK(out[1] == doctest::Approx(0.5));
}

TEST_CASE("order checks land in the first-order window") {
  for (const auto& rows : {check_diffusion_order(42), check_sync_order(42)}) {
    for (const CheckRow& r : rows) {
      if (r.skipped) continue;
      CHECK_MESSAGE(r.pass, r.check);
      CHECK(r.measured >= kOrderRatioLo);
      CHECK(r.measured <= kOrderRatioHi);
    }
  }
}

TEST_CASE("spectral truncation and consensus checks pass") {
  for (const auto& r : check_spectral_truncation(7, 12, 4, 30)) CHECK_MESSAGE(r.pass, r.check);
  for (const auto& r : check_consensus(7, 50)) CHECK_MESSAGE(r.pass, r.check);
}

TEST_CASE("report output") {
  ValidationReport rep;
  rep.rows.push_back({"a", "claim a", 0.5, 0.65, true, false, 1.0});
  rep.rows.push_back({"b", "claim b", 0.0, 0.0, false, true, 0.0});
  CHECK(rep.all_pass());
  std::ostringstream os;
  rep.print_table(os);
  CHECK(os.str().find("skipped") != std::string::npos);
  rep.rows.push_back({"c", "claim c", 2.0, 1.0, false, false, 0.0});
  CHECK_FALSE(rep.all_pass());
}
