#include "twogauge/montecarlo.hpp"

#include <doctest.h>

#include <cmath>

using namespace twogauge;

TEST_SUITE("montecarlo") {

TEST_CASE("Wilson interval") {
  // (p + z^2/2n +- z sqrt(p(1-p)/n + z^2/4n^2)) / (1 + z^2/n)
  const double z = 1.959963984540054;
  for (auto [k, n] : {std::pair{0L, 10L}, {5L, 10L}, {37L, 200L}, {200L, 200L}}) {
    const double p = double(k) / n, d = 1 + z * z / n;
    const double c = (p + z * z / (2.0 * n)) / d;
    const double h = z * std::sqrt(p * (1 - p) / n + z * z / (4.0 * n * n)) / d;
    const auto e = wilson(k, n);
    CHECK(e.p_hat == doctest::Approx(p));
    CHECK(e.ci_low == doctest::Approx(std::max(0.0, c - h)).epsilon(1e-12));
    CHECK(e.ci_high == doctest::Approx(std::min(1.0, c + h)).epsilon(1e-12));
  }
  CHECK(wilson(0, 10).ci_low == 0.0);
  CHECK(wilson(10, 10).ci_high == doctest::Approx(1.0));
}

TEST_CASE("estimates do not depend on the worker count") {
  const Event coin = [](Rng& rng, std::uint64_t) { return std::uniform_real_distribution<double>(0, 1)(rng) < 0.3; };
  const auto a = estimate_prob(coin, 5000, 17, 1), b = estimate_prob(coin, 5000, 17, 3);
  CHECK(a.successes == b.successes);
  CHECK(a.p_hat == doctest::Approx(0.3).epsilon(0.1));
  CHECK(derive_seed(1, "x") == derive_seed(1, "x"));
  CHECK(derive_seed(1, "x") != derive_seed(1, "y"));
  CHECK(derive_seed(1, "x") != derive_seed(2, "x"));
}

TEST_CASE("ratio rows and bands") {
  Report rep;
  rep.experiment = "demo";
  rep.rows.push_back(ratio_row("g", "a", wilson(20, 100), 0.1));
  rep.rows.push_back(ratio_row("g", "b", wilson(40, 100), 0.1));
  rep.rows.push_back(ratio_row("g", "c", wilson(40, 100), 0.0));
  CHECK(rep.rows[0].ratio == doctest::Approx(2.0));
  CHECK_FALSE(rep.rows[2].defined);
  finalize(rep, {{"g", 2.5}});
  REQUIRE(rep.bands.size() == 1);
  CHECK(rep.bands[0].width == doctest::Approx(2.0));
  CHECK(rep.verdict);
  finalize(rep, {{"g", 1.5}});
  CHECK_FALSE(rep.verdict);
  const auto two = ratio_row("h", "x", wilson(10, 100), wilson(20, 100), 0.5);
  CHECK(two.ratio == doctest::Approx(1.0));
  CHECK(two.ratio_low <= two.ratio);
  CHECK(two.ratio_high >= two.ratio);
}

TEST_CASE("canonical JSON leaves the runtime out") {
  Report a;
  a.experiment = "demo";
  a.rows.push_back(ratio_row("g", "a", wilson(20, 100), 0.1));
  Report b = a;
  a.runtime = 1.0;
  b.runtime = 2.0;
  CHECK(to_json(a).dump() == to_json(b).dump());
  CHECK(to_csv(a).rfind("group,condition,p_hat,ci_low,ci_high,reference,ratio", 0) == 0);
}

TEST_CASE("thm22 reports are identical across worker counts") {
  McOptions mc;
  mc.trials = 200;
  mc.seed = 42;
  const auto family = standard_family(1.0 / 32);
  const auto one = run_thm22(family, 1.0 / 8, mc);
  mc.workers = 2;
  const auto two = run_thm22(family, 1.0 / 8, mc);
  CHECK(to_json(one).dump() == to_json(two).dump());
  CHECK(to_csv(one) == to_csv(two));
}

TEST_CASE("second-moment bound is exact on a single cell") {
  const auto cases = second_moment_cases(1.0 / 16);
  REQUIRE(cases.size() == 3);
  McOptions mc;
  mc.trials = 2000;
  const auto sm = second_moment_bound(cases[0].set, cases[0].mu, 1.0 / 16, cases[0].delta, mc);
  // X is a multiple of the event indicator, so (EX)^2 / EX^2 is the empirical probability
  CHECK(sm.bound == doctest::Approx(sm.direct.p_hat).epsilon(1e-12));
  CHECK(sm.positive.successes == sm.direct.successes);
}

TEST_CASE("second-moment bound never exceeds P(X > 0)") {
  const auto cases = second_moment_cases(1.0 / 16);
  McOptions mc;
  mc.trials = 1000;
  for (const auto& c : cases) {
    const auto sm = second_moment_bound(c.set, c.mu, 1.0 / 16, c.delta, mc);
    // Cauchy-Schwarz on the sample itself
    CHECK(sm.bound <= sm.positive.p_hat + 1e-12);
  }
}

}
