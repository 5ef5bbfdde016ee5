#include "twogauge/error.hpp"
#include "twogauge/hybrid.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace twogauge;

TEST_SUITE("hybrid") {

TEST_CASE("under-resolved sets are rejected") {
  const auto set = make_cantor(0.75, 3);  // intervals of length ~0.037
  CHECK_THROWS_AS(cap_eps(set, 0.1, Gauge::log(), Gauge::log_squared()), UnderResolvedError);
  CHECK_NOTHROW(cap_eps(subdivide(set, 0.025), 0.1, Gauge::log(), Gauge::log_squared()));
}

TEST_CASE("on a fixed set Cap_eps is nondecreasing as eps shrinks and stays below Cap_f") {
  const auto set = make_disk(Point::Zero(), 0.1, 0.1 / 40);
  const double cap_f = capacity(set, Gauge::log()).value;
  std::vector<double> caps;
  for (int k = 2; k <= 5; ++k) caps.push_back(cap_eps(set, std::ldexp(1.0, -k), Gauge::log(), Gauge::log_squared()).value);
  CHECK(nondecreasing(caps));
  for (double c : caps) CHECK(c <= cap_f * (1 + 1e-9));
}

TEST_CASE("coupled schedule on a disk") {
  const auto r = cap_hybrid(disk_builder(Point::Zero(), std::exp(-2.0)), dyadic_schedule(2, 5), 0.25, Gauge::log(),
                            Gauge::log_squared());
  REQUIRE(r.cap_values.size() == 4);
  CHECK(r.monotone_ok);
  CHECK(r.limit_estimate == r.cap_values.back().value);
  for (std::size_t k = 0; k < r.cap_values.size(); ++k) {
    CHECK(r.cap_values[k].resolution <= 0.25 * r.eps_schedule[k] * (1 + 1e-12));
    CHECK(r.cap_values[k].converged);
  }
  CHECK(r.cap_f >= r.limit_estimate);
  CHECK(to_csv(r).find("eps,resolution,cap_eps,kkt_residual") == 0);
}

TEST_CASE("schedules") {
  const auto s = dyadic_schedule(2, 4);
  REQUIRE(s.size() == 3);
  CHECK(s[0] == 0.25);
  CHECK(s[2] == 0.0625);
  CHECK(nondecreasing({1.0, 1.0, 2.0}));
  CHECK(nondecreasing({1.0, 1.0 - 1e-7}));
  CHECK_FALSE(nondecreasing({1.0, 0.99}));
  CHECK_THROWS_AS(cap_hybrid(disk_builder(Point::Zero(), 0.1), {0.1, 0.2}, 0.25, Gauge::log(), Gauge::log_squared()),
                  PreconditionError);
}

TEST_CASE("Cantor depth follows eps") {
  for (int n = 1; n <= 5; ++n) CHECK(cantor_depth_for(0.75, cantor_interval_length(0.75, n)) == n);
}

TEST_CASE("unconstrained characterization equals Cap_f") {
  const auto set = make_disk(Point::Zero(), 0.1, 0.02);
  const double inf = std::numeric_limits<double>::infinity();
  CHECK(cap_constrained(set, Gauge::log(), Gauge::log_squared(), inf) ==
        doctest::Approx(capacity(set, Gauge::log()).value).epsilon(1e-8));
}

TEST_CASE("the g-energy constraint binds") {
  const auto set = make_disk(Point::Zero(), 0.1, 0.02);
  const auto f = Gauge::log(), g = Gauge::log_squared();
  const auto free = cap_constrained_solve(set, f, g, std::numeric_limits<double>::infinity());
  const double g_min = capacity(set, g).energy;
  const double gamma = 0.5 * (g_min + free.g_energy);
  const auto c = cap_constrained_solve(set, f, g, gamma);
  CHECK(c.g_energy <= gamma * (1 + 1e-6));
  CHECK(c.value <= free.value * (1 + 1e-9));
  CHECK(c.multiplier > 0.0);
  CHECK_THROWS_AS(cap_constrained_solve(set, f, g, 0.5 * g_min), PreconditionError);
}

}
