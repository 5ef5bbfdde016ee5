#include "twogauge/error.hpp"
#include "twogauge/geometry.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace twogauge;

TEST_SUITE("geometry") {

TEST_CASE("disk cell count follows the area") {
  const auto d = make_disk(Point::Zero(), 0.1, 0.1 / 64);
  const double expected = std::numbers::pi * 64 * 64;
  CHECK(std::abs(static_cast<double>(d.size()) - expected) <= 0.05 * expected);
}

TEST_CASE("disk cells are the Gauss circle lattice points") {
  // independent count of integer pairs with i^2 + j^2 < (m + 1/2)^2; the bound
  // is never an integer, so rounding cannot move a point across it
  const double h = 1.0 / 256;
  for (int m : {3, 7, 20, 33}) {
    const double rho = m + 0.5;
    long count = 0;
    for (int i = -m - 1; i <= m + 1; ++i)
      for (int j = -m - 1; j <= m + 1; ++j) count += i * i + j * j < rho * rho;
    CHECK(static_cast<long>(make_disk(Point(0.01, -0.02), rho * h, h).size()) == count);
  }
}

TEST_CASE("disk cells are disjoint and sorted") {
  const auto d = make_disk(Point(0.05, 0.0), 0.07, 0.01);
  CHECK(find_overlap(d.cells()) == -1);
  for (std::size_t i = 1; i < d.size(); ++i) {
    const auto& a = d[i - 1].center;
    const auto& b = d[i].center;
    CHECK((a.x() < b.x() || (a.x() == b.x() && a.y() < b.y())));
  }
  CHECK(d.resolution() == doctest::Approx(0.01 * std::numbers::sqrt2));
}

TEST_CASE("Cantor stage has 2^n intervals of the prescribed length") {
  for (int n = 0; n <= 5; ++n) {
    const auto c = make_cantor(0.75, n);
    CHECK(c.size() == (std::size_t{1} << n));
    const double len = n == 0 ? 1.0 : std::exp2(-std::exp2(0.75 * n));
    for (const auto& cell : c.cells()) {
      CHECK(cell.degenerate());
      CHECK(2 * cell.halfwidth.x() == doctest::Approx(len).epsilon(1e-12));
    }
    CHECK(c.total_measure() == doctest::Approx(std::exp2(n) * len));
  }
}

TEST_CASE("Cantor stages are nested") {
  const auto coarse = make_cantor(0.75, 2), fine = make_cantor(0.75, 4);
  for (const auto& cell : fine.cells()) {
    bool inside = false;
    for (const auto& parent : coarse.cells())
      inside = inside || (std::abs(cell.center.x() - parent.center.x()) + cell.halfwidth.x() <=
                          parent.halfwidth.x() + 1e-15);
    CHECK(inside);
  }
}

TEST_CASE("target flag enforces the 1/3 disk") {
  auto big = make_disk(Point::Zero(), 0.4, 0.05);
  CHECK_THROWS_AS(big.mark_target(), PreconditionError);
  auto small = make_disk(Point::Zero(), 0.3, 0.05);
  CHECK_NOTHROW(small.mark_target());
  CHECK(small.is_target());
}

TEST_CASE("overlapping cells are rejected") {
  std::vector<Cell> cells{{Point(0, 0), {0.1, 0.1}}, {Point(0.15, 0), {0.1, 0.1}}};
  CHECK_THROWS_AS(CompactSet(cells, "bad"), PreconditionError);
  cells[1].center.x() = 0.2;  // shares an edge only
  CHECK_NOTHROW(CompactSet(cells, "ok"));
}

TEST_CASE("subdivide keeps the measure and meets the resolution") {
  const auto c = make_cantor(0.75, 3);
  const auto s = subdivide(c, 0.005);
  CHECK(s.resolution() <= 0.005);
  CHECK(s.total_measure() == doctest::Approx(c.total_measure()));
  const auto d = make_disk(Point::Zero(), 0.1, 0.02);
  const auto r = refine(d, 3);
  CHECK(r.size() == 9 * d.size());
  CHECK(r.total_measure() == doctest::Approx(d.total_measure()));
}

TEST_CASE("transformed and unite") {
  const auto c = transformed(make_cantor(0.75, 2), 0.5, Point(0, 0.1));
  CHECK(c.diameter() == doctest::Approx(0.5));
  const auto d = make_disk(Point(0, -0.2), 0.05, 0.01);
  const auto u = unite(c, d, "u");
  CHECK(u.size() == c.size() + d.size());
  CHECK_THROWS_AS(unite(d, d, "twice"), PreconditionError);
}

TEST_CASE("segment cells") {
  const auto s = make_segment(-0.25, 0.25, 0.1, 0.03);
  CHECK(s.resolution() <= 0.03);
  CHECK(s.total_measure() == doctest::Approx(0.5));
  CHECK(s.contains(Point(0.0, 0.1)));
  CHECK_FALSE(s.contains(Point(0.0, 0.11)));
}

TEST_CASE("set JSON round trip is lossless") {
  auto s = unite(transformed(make_cantor(0.75, 3), 0.6, Point::Zero()), make_disk(Point(0, 0.2), 0.05, 0.007), "mix");
  s.mark_target();
  const auto back = set_from_json(nlohmann::json::parse(to_json(s).dump()));
  REQUIRE(back.size() == s.size());
  CHECK(back.label() == s.label());
  CHECK(back.is_target());
  for (std::size_t i = 0; i < s.size(); ++i) {
    CHECK(back[i].center == s[i].center);
    CHECK(back[i].halfwidth == s[i].halfwidth);
  }
}

TEST_CASE("malformed set JSON is rejected") {
  CHECK_THROWS_AS(set_from_json(nlohmann::json{{"cells", 3}}), PreconditionError);
  nlohmann::json doc{{"label", "x"}, {"cells", {{{"cx", 0.0}, {"cy", 0.0}, {"hx", -1.0}, {"hy", 0.0}}}}};
  CHECK_THROWS_AS(set_from_json(doc), PreconditionError);
}

}
