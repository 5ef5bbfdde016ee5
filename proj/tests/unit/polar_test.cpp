#include "twogauge/error.hpp"
#include "twogauge/polar.hpp"

#include <doctest.h>

#include <cmath>
#include <set>

using namespace twogauge;

TEST_SUITE("polar") {

TEST_CASE("default radius schedule") {
  const auto d = make_disk(Point::Zero(), 0.1, 0.01);
  const auto r = default_radius_schedule(d);
  REQUIRE_FALSE(r.empty());
  CHECK(r.front() == doctest::Approx(d.diameter() / 2));
  for (std::size_t k = 1; k < r.size(); ++k) CHECK(r[k] == doctest::Approx(r[k - 1] / 2));
  CHECK(r.back() > 2 * d.resolution());
  CHECK(r.back() / 2 <= 2 * d.resolution());
  CHECK_THROWS_AS(classify(d, Gauge::log_squared(), {0.01}), PreconditionError);
  CHECK_THROWS_AS(classify(d, Gauge::log_squared(), {0.05, 0.1}), PreconditionError);
}

TEST_CASE("solid disk: every node NLMC, inclusion holds, certificate equals one") {
  const auto d = make_disk(Point::Zero(), 0.1, 0.02);
  const auto pts = classify(d, Gauge::log_squared(), default_radius_schedule(d));
  REQUIRE(pts.size() == d.size());
  for (const auto& p : pts) {
    CHECK(p.nlmc);
    CHECK_FALSE(p.indeterminate);
  }
  CHECK(inclusion_violations(pts).empty());
  CHECK(max_certificate(pts) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("a point far from the rest of the set is neither NLMC nor regular") {
  auto cells = make_disk(Point(-0.1, 0.0), 0.05, 0.01).cells();
  cells.push_back({Point(0.2, 0.0), {0.005, 0.005}});
  const CompactSet set(cells, "disk+point");
  const auto pts = classify(set, Gauge::log_squared(), default_radius_schedule(set));
  const auto lone = std::find_if(pts.begin(), pts.end(), [&](const auto& p) {
    return set[p.node].center.x() > 0.15;
  });
  REQUIRE(lone != pts.end());
  CHECK_FALSE(lone->nlmc);
  CHECK_FALSE(lone->strongly_regular);
  CHECK(lone->radii.back().martin_cap == 0.0);
  CHECK(inclusion_violations(pts).empty());
}

TEST_CASE("decomposition partitions the set") {
  auto cantor = transformed(make_cantor(0.75, 4), 0.5, Point::Zero());
  const auto set = unite(cantor, make_disk(Point(0, 0.2), 0.05, 0.0075 / std::sqrt(2.0)), "mix");
  const auto d = decompose(set, Gauge::log_squared());
  CHECK(d.a1.size() + d.a2.size() == set.size());
  std::set<std::pair<double, double>> seen;
  for (const auto* part : {&d.a1, &d.a2})
    for (const auto& c : part->cells()) CHECK(seen.insert({c.center.x(), c.center.y()}).second);
  CHECK(d.cap_log_a2 > 0.0);
  const auto j = to_json(d);
  CHECK(j["inclusion_violations"].empty());
  CHECK(classification_csv(set, d.points, d.radii).rfind("node,x,y,cap_r1", 0) == 0);
}

TEST_CASE("labels are stable under small changes of the threshold") {
  const auto set = unite(transformed(make_cantor(0.75, 4), 0.5, Point::Zero()),
                         make_disk(Point(0, 0.2), 0.05, 0.0075 / std::sqrt(2.0)), "mix");
  const auto radii = default_radius_schedule(set);
  PolarOptions lo, hi;
  lo.threshold = 0.04;
  hi.threshold = 0.06;
  const auto a = classify(set, Gauge::log_squared(), radii, lo), b = classify(set, Gauge::log_squared(), radii, hi);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].nlmc == b[i].nlmc);
}

TEST_CASE("labels are stable under the diagonal rule") {
  const auto d = make_disk(Point::Zero(), 0.1, 0.02);
  const auto radii = default_radius_schedule(d);
  PolarOptions a, b;
  a.kernel_theta = 0.3;
  b.kernel_theta = 0.4;
  const auto pa = classify(d, Gauge::log_squared(), radii, a), pb = classify(d, Gauge::log_squared(), radii, b);
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i].nlmc == pb[i].nlmc);
}

TEST_CASE("worker count does not change the labels") {
  const auto d = make_disk(Point::Zero(), 0.1, 0.02);
  const auto radii = default_radius_schedule(d);
  PolarOptions two;
  two.workers = 2;
  const auto a = classify(d, Gauge::log_squared(), radii), b = classify(d, Gauge::log_squared(), radii, two);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].nlmc == b[i].nlmc);
    CHECK(a[i].strongly_regular == b[i].strongly_regular);
    CHECK(a[i].radii.back().martin_cap == b[i].radii.back().martin_cap);
  }
}

TEST_CASE("local Martin capacity") {
  const auto d = make_disk(Point::Zero(), 0.1, 0.02);
  CHECK(local_martin_cap(d, 0, 0.08, Gauge::log_squared()) > 0.0);
  CHECK_THROWS_AS(local_martin_cap(d, 0, 0.03, Gauge::log_squared()), PreconditionError);
  CHECK_THROWS_AS(local_martin_cap(d, d.size(), 0.08, Gauge::log_squared()), PreconditionError);
}

}
