#include "twogauge/brownian.hpp"
#include "twogauge/error.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace twogauge;

TEST_SUITE("brownian") {

TEST_CASE("unit disk exit time moments") {
  // E T = 1/2 and E T^2 = 3/8 for planar Brownian motion from the center
  const auto& law = UnitDiskExitTime::instance();
  Rng rng = make_rng(1, 0);
  const int n = 200000;
  double m1 = 0.0, m2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double t = law.sample(rng);
    m1 += t;
    m2 += t * t;
  }
  m1 /= n;
  m2 /= n;
  CHECK(m1 == doctest::Approx(0.5).epsilon(0.005));
  CHECK(m2 == doctest::Approx(0.375).epsilon(0.01));
  CHECK(law.survival(0.0) == doctest::Approx(1.0));
  CHECK(law.survival(0.2) > law.survival(0.4));
  CHECK(law.survival(5.0) < 1e-6);
}

TEST_CASE("stepped paths stop at the exit circle") {
  const auto p = sample_path(Point(0.5, 0.0), 1e-3, 9, 3, 1.0);
  REQUIRE(p.points.size() == p.times.size());
  CHECK(p.stopped_at == p.points.size() - 1);
  CHECK(p.points.back().norm() >= 1.0);
  for (std::size_t i = 0; i + 1 < p.points.size(); ++i) CHECK(p.points[i].norm() < 1.0);
  CHECK(p.times[1] - p.times[0] == doctest::Approx(1e-3));
}

TEST_CASE("mean exit time from the unit disk") {
  double sum = 0.0;
  const int n = 4000;
  for (int i = 0; i < n; ++i) sum += sample_path(Point::Zero(), 1e-4, 21, i, 1.0).times.back();
  // (R^2 - |x|^2) / 2 plus a small overshoot of order sqrt(dt)
  CHECK(sum / n == doctest::Approx(0.5).epsilon(0.05));
}

TEST_CASE("annulus hitting probability with the accelerated walk") {
  const double delta = 0.25;
  const BallTargets target({Point::Zero()}, delta);
  WalkOptions o;
  o.dt = delta * delta / 16;
  long hits = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    Rng rng = make_rng(4, i);
    hits += walk(Point(1, 0), o, &target, rng, [](double, const Point&, auto) { return true; }).stopped;
  }
  CHECK(hits / double(n) == doctest::Approx(std::log(3.0) / std::log(3.0 / delta)).epsilon(0.05));
}

TEST_CASE("generators are reproducible per stream") {
  Rng a = make_rng(5, 7), b = make_rng(5, 7), c = make_rng(5, 8);
  const auto x = a(), y = b(), z = c();
  CHECK(x == y);
  CHECK(x != z);
  CHECK(splitmix64(1) != splitmix64(2));
}

TEST_CASE("trajectory round trip") {
  const auto p = sample_path(Point(1, 0), 1e-3, 2, 5);
  std::stringstream buf;
  write_trajectory(buf, p);
  const auto q = read_trajectory(buf);
  CHECK(q.dt == p.dt);
  CHECK(q.rng_seed == p.rng_seed);
  CHECK(q.rng_stream == p.rng_stream);
  REQUIRE(q.points.size() == p.points.size());
  for (std::size_t i = 0; i < p.points.size(); ++i) {
    CHECK(q.points[i] == p.points[i]);
    CHECK(q.times[i] == p.times[i]);
  }
  std::stringstream junk("not a trajectory");
  CHECK_THROWS_AS(read_trajectory(junk), Error);
}

TEST_CASE("visit pairs need a separation of at least eps^2") {
  const double eps = 0.1;
  const std::int32_t cell = 0;
  EpsDoubleTracker below(1, eps);
  below.visit(0.0, {&cell, 1});
  CHECK_FALSE(below.visit(eps * eps * (1 - 1e-9), {&cell, 1}));
  CHECK_FALSE(below.fired());
  EpsDoubleTracker at(1, eps);
  at.visit(0.0, {&cell, 1});
  CHECK(at.visit(eps * eps, {&cell, 1}));
  CHECK(at.fired());
  CHECK(at.fired_cells() == std::vector<std::int32_t>{0});
  at.reset();
  CHECK_FALSE(at.fired());
}

TEST_CASE("event detection on stored paths") {
  const CompactSet set({Cell{Point::Zero(), {0.05, 0.05}}}, "box");
  Trajectory t;
  t.dt = 0.01;
  t.times = {0.0, 0.01, 0.02, 0.03};
  t.points = {Point(0, 0), Point(0.5, 0), Point(0.5, 0.1), Point(0.01, 0.0)};
  t.stopped_at = 3;
  CHECK(detect_eps_double(t, set, 0.1).hit);        // separation 0.03 >= 0.01
  CHECK_FALSE(detect_eps_double(t, set, 0.2).hit);  // 0.03 < 0.04
  Trajectory u = t;
  u.points = {Point(0.5, 0.5), Point(0.5, 0.5), Point(0.5, 0.5), Point(0.02, 0.02)};
  Trajectory v = t;
  v.points = {Point(0.5, 0.5), Point(0.5, 0.5), Point(0.5, 0.5), Point(0.6, 0.6)};
  CHECK(detect_intersection(t, u, set).hit);
  CHECK_FALSE(detect_intersection(v, u, set).hit);
}

}
