#include "twogauge/error.hpp"
#include "twogauge/gauges.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <random>

using namespace twogauge;

TEST_SUITE("gauges") {

TEST_CASE("closed forms") {
  CHECK(Gauge::log()(0.5) == doctest::Approx(std::log(2.0)));
  CHECK(Gauge::log_squared()(0.5) == doctest::Approx(std::log(2.0) * std::log(2.0)));
  CHECK(Gauge::power(0.5)(0.25) == doctest::Approx(2.0));
  CHECK(Gauge::log(2.0)(0.125) == doctest::Approx(3.0));
  CHECK_THROWS_AS(Gauge::log()(1.0), PreconditionError);
  CHECK_THROWS_AS(Gauge::log()(0.0), PreconditionError);
}

TEST_CASE("descriptor round trip") {
  for (const char* d : {"log", "log2", "pow:0.5", "hyb:log->log2:0.125"}) {
    const auto g = Gauge::parse(d);
    const auto again = Gauge::parse(g.descriptor());
    for (double r : {1e-6, 1e-3, 0.05, 0.3, 0.9}) CHECK(again(r) == doctest::Approx(g(r)).epsilon(1e-14));
  }
  const auto arrow = Gauge::parse("hyb:log→log2:0.1");
  CHECK(arrow.kind() == Gauge::Kind::Hybrid);
  CHECK(arrow.eps() == doctest::Approx(0.1));
  CHECK_THROWS_AS(Gauge::parse("cubic"), PreconditionError);
  CHECK_THROWS_AS(Gauge::parse("pow:x"), PreconditionError);
}

TEST_CASE("hybrid is continuous at the knee and monotone in eps") {
  const auto f = Gauge::log(), g = Gauge::log_squared();
  std::vector<double> knees;
  for (int k = 2; k <= 12; ++k) knees.push_back(std::ldexp(1.0, -k));
  for (double eps : knees) {
    const auto h = Gauge::hybrid(f, g, eps);
    CHECK(h(eps * (1 - 1e-12)) == doctest::Approx(h(eps)).epsilon(1e-9));
    for (int j = 0; j <= 200; ++j) {
      const double r = std::pow(10.0, -0.05 * j) * 0.99;
      CHECK(h(r) >= f(r) * (1 - 1e-12));
    }
  }
  for (std::size_t a = 0; a < knees.size(); ++a)
    for (std::size_t b = 0; b < a; ++b) {
      // knees[a] < knees[b]
      const auto lo = Gauge::hybrid(f, g, knees[a]), hi = Gauge::hybrid(f, g, knees[b]);
      for (int j = 0; j <= 200; ++j) {
        const double r = std::pow(10.0, -0.05 * j) * 0.99;
        CHECK(lo(r) <= hi(r) * (1 + 1e-12));
      }
    }
}

TEST_CASE("hybrid requires f <= g below the knee") {
  CHECK_THROWS_AS(Gauge::hybrid(Gauge::log_squared(), Gauge::log(), 0.1), PreconditionError);
}

TEST_CASE("kernel matrices are conditionally positive definite") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (const char* d : {"log", "log2", "pow:0.5", "hyb:log->log2:0.05"}) {
    const auto gauge = Gauge::parse(d);
    for (auto set : {make_disk(Point::Zero(), 0.1, 0.02), make_cantor(0.75, 3), refine(make_cantor(0.75, 2), 4)}) {
      const auto K = kernel_matrix(set, gauge).to_dense();
      const auto n = K.rows();
      // restrict to sum-zero vectors: P K P with P the centering projection
      const Eigen::MatrixXd P = Eigen::MatrixXd::Identity(n, n) - Eigen::MatrixXd::Constant(n, n, 1.0 / n);
      const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(P * K * P);
      // one zero eigenvalue belongs to the constant vector
      int negative = 0;
      for (Eigen::Index i = 0; i < n; ++i) negative += es.eigenvalues()[i] < -1e-9 * es.eigenvalues().cwiseAbs().maxCoeff();
      CHECK_MESSAGE(negative == 0, d << " on " << set.label());
    }
  }
}

TEST_CASE("lattice kernel storage matches dense entries") {
  const auto set = make_disk(Point(0.02, 0.0), 0.3, 0.3 / 48);
  REQUIRE(set.size() > 4096);
  const auto gauge = Gauge::log_squared();
  const auto K = kernel_matrix(set, gauge);
  CHECK(K.storage() != KernelMatrix::Storage::Dense);
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<Eigen::Index> pick(0, K.size() - 1);
  for (int t = 0; t < 200; ++t) {
    const auto i = pick(rng), j = pick(rng);
    const double ref = i == j ? gauge(kDefaultTheta * set[i].diameter())
                              : gauge((set[i].center - set[j].center).norm());
    CHECK(K(i, j) == doctest::Approx(ref).epsilon(1e-12));
  }
  Eigen::VectorXd w = Eigen::VectorXd::Zero(K.size());
  for (int t = 0; t < 50; ++t) w[pick(rng)] += 1.0;
  const Eigen::VectorXd fast = K.apply(w);
  for (int t = 0; t < 20; ++t) {
    const auto i = pick(rng);
    double ref = 0.0;
    for (Eigen::Index j = 0; j < K.size(); ++j)
      if (w[j] != 0.0) ref += w[j] * K(i, j);
    CHECK(fast[i] == doctest::Approx(ref).epsilon(1e-9));
  }
}

TEST_CASE("Martin kernel") {
  const auto m = martin_kernel(Gauge::log_squared(), Point::Zero());
  const Point x(0.1, 0.0), y(0.0, 0.2);
  CHECK(m(x, y) == doctest::Approx(Gauge::log_squared()(std::hypot(0.1, 0.2)) / Gauge::log_squared()(0.2)));
  CHECK_THROWS_AS(m(x, Point::Zero()), PreconditionError);
  CHECK_THROWS_AS(m(y, y), PreconditionError);
}

}
