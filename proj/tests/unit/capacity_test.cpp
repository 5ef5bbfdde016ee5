#include "twogauge/capacity.hpp"
#include "twogauge/error.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace twogauge;

namespace {

// Minimizer of w'Kw on the 2-simplex: w = (c - b, a - b) / (a + c - 2b), clipped.
double two_node_energy(double a, double b, double c) {
  const double den = a + c - 2 * b;
  const double w0 = std::clamp((c - b) / den, 0.0, 1.0);
  const double w1 = 1 - w0;
  return a * w0 * w0 + 2 * b * w0 * w1 + c * w1 * w1;
}

CompactSet annulus(double inner, double outer, double resolution) {
  std::vector<Cell> cells;
  for (const auto& c : make_disk(Point::Zero(), outer, resolution).cells())
    if (c.center.norm() >= inner) cells.push_back(c);
  return CompactSet::trusted(std::move(cells), "annulus");
}

}  // namespace

TEST_SUITE("capacity") {

TEST_CASE("two nodes match the closed form") {
  for (double dist : {0.05, 0.2, 0.6})
    for (const char* g : {"log", "log2", "pow:0.5"}) {
      std::vector<Cell> cells{{Point(0, 0), {0.01, 0.01}}, {Point(dist, 0), {0.02, 0.02}}};
      const CompactSet set(cells, "pair");
      const auto K = kernel_matrix(set, Gauge::parse(g));
      const auto r = equilibrium_measure(K);
      CHECK(r.converged);
      CHECK(r.energy == doctest::Approx(two_node_energy(K(0, 0), K(0, 1), K(1, 1))).epsilon(1e-10));
    }
}

TEST_CASE("single node") {
  const CompactSet one({Cell{Point::Zero(), {0.01, 0.01}}}, "one");
  const auto r = capacity(one, Gauge::log());
  CHECK(r.energy == doctest::Approx(Gauge::log()(kDefaultTheta * one[0].diameter())));
  CHECK(r.measure.weights[0] == doctest::Approx(1.0));
}

TEST_CASE("KKT certificate at the optimum") {
  const auto set = make_disk(Point::Zero(), 0.1, 0.01);
  const auto r = capacity(set, Gauge::log_squared());
  REQUIRE(r.converged);
  CHECK(r.relative_residual() <= 1e-8);
  CHECK(r.measure.total() == doctest::Approx(1.0));
  CHECK(r.measure.weights.minCoeff() >= 0.0);
  // potential at least E* everywhere, equal to it on the support
  CHECK(r.potential.minCoeff() >= r.energy * (1 - 1e-7));
  for (auto i : r.measure.support()) CHECK(r.potential[i] == doctest::Approx(r.energy).epsilon(1e-7));
}

TEST_CASE("the energy is no larger than at random measures") {
  const auto set = make_cantor(0.75, 3);
  const auto K = kernel_matrix(set, Gauge::log());
  const auto r = equilibrium_measure(K);
  std::mt19937_64 rng(11);
  std::exponential_distribution<double> e(1.0);
  for (int t = 0; t < 200; ++t) {
    DiscreteMeasure mu{Eigen::VectorXd(K.size())};
    for (Eigen::Index i = 0; i < K.size(); ++i) mu.weights[i] = e(rng);
    mu.weights /= mu.total();
    CHECK(energy(K, mu) >= r.energy * (1 - 1e-12));
  }
}

TEST_CASE("capacity is monotone under inclusion") {
  const auto big = make_disk(Point::Zero(), 0.2, 0.02);
  std::vector<Cell> half;
  for (const auto& c : big.cells())
    if (c.center.x() < 0) half.push_back(c);
  const auto part = CompactSet::trusted(half, "half");
  for (const char* g : {"log", "log2"})
    CHECK(capacity(part, Gauge::parse(g)).value <= capacity(big, Gauge::parse(g)).value * (1 + 1e-9));
}

TEST_CASE("log capacity of an annulus equals that of the full disk") {
  // the equilibrium measure of a disk sits on its boundary circle
  const double h = 0.1 / 40;
  const auto disk = make_disk(Point::Zero(), 0.1, h);
  const auto ring = annulus(0.06, 0.1, h);
  const double cd = capacity(disk, Gauge::log()).value, cr = capacity(ring, Gauge::log()).value;
  CHECK(cr == doctest::Approx(cd).epsilon(1e-3));
  CHECK(cd == doctest::Approx(1.0 / std::log(10.0)).epsilon(0.01));
}

TEST_CASE("interior nodes are nonregular and carry no mass") {
  const auto set = make_disk(Point::Zero(), 0.1, 0.1 / 16);
  const auto r = capacity(set, Gauge::log());
  const auto part = regular_points(r, 1e-6);
  CHECK(part.regular.size() + part.nonregular.size() == set.size());
  bool center_nonregular = false;
  for (auto i : part.nonregular) {
    CHECK(r.measure.weights[i] <= 1e-12);
    center_nonregular = center_nonregular || set[static_cast<std::size_t>(i)].center.norm() < 1e-12;
  }
  CHECK(center_nonregular);
}

TEST_CASE("repeated solves are identical") {
  const auto set = make_disk(Point(0.01, 0.0), 0.15, 0.004);
  const auto a = capacity(set, Gauge::log_squared()), b = capacity(set, Gauge::log_squared());
  CHECK(a.energy == b.energy);
  CHECK(a.measure.weights == b.measure.weights);
}

TEST_CASE("disk capacity approaches 1 / log(1 / r) under refinement") {
  std::vector<double> caps;
  for (int m : {16, 32, 64}) caps.push_back(capacity(make_disk(Point::Zero(), 0.1, 0.1 / m), Gauge::log()).value);
  CHECK(caps[0] <= caps[1] * (1 + 1e-3));
  CHECK(caps[1] <= caps[2] * (1 + 1e-3));
  CHECK(caps[2] == doctest::Approx(1.0 / std::log(10.0)).epsilon(0.01));
}

TEST_CASE("node pairs at distance one or more are rejected") {
  const CompactSet far({Cell{Point(-0.6, 0), {0.01, 0.01}}, Cell{Point(0.6, 0), {0.01, 0.01}}}, "far");
  CHECK_THROWS_AS(kernel_matrix(far, Gauge::log()), PreconditionError);
}

}
