#include "twogauge/geometry.hpp"

#include "twogauge/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <unordered_map>
#include <utility>

namespace twogauge {

namespace {

constexpr double kSlack = 1e-12;

bool lex_less(const Cell& a, const Cell& b) {
  if (a.center.x() != b.center.x()) return a.center.x() < b.center.x();
  return a.center.y() < b.center.y();
}

// Interior intersection of two closed cells; segment cells use their relative
// interior.
bool interiors_meet(const Cell& a, const Cell& b) {
  const double ox = std::min(a.center.x() + a.halfwidth.x(), b.center.x() + b.halfwidth.x()) -
                    std::max(a.center.x() - a.halfwidth.x(), b.center.x() - b.halfwidth.x());
  const double scale = std::max(a.halfwidth.x(), b.halfwidth.x());
  if (ox <= kSlack * scale) return false;
  const double dy = std::abs(a.center.y() - b.center.y());
  if (a.degenerate() && b.degenerate()) return dy <= kSlack * scale;
  if (a.degenerate()) return dy < b.halfwidth.y() * (1.0 - kSlack);
  if (b.degenerate()) return dy < a.halfwidth.y() * (1.0 - kSlack);
  const double oy = a.halfwidth.y() + b.halfwidth.y() - dy;
  return oy > kSlack * std::max(a.halfwidth.y(), b.halfwidth.y());
}

std::vector<Point> hull(std::vector<Point> pts) {
  std::sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;
  auto cross = [](const Point& o, const Point& a, const Point& b) {
    return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
  };
  std::vector<Point> h(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(h[k - 2], h[k - 1], p) <= 0) --k;
    h[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(h[k - 2], h[k - 1], pts[i]) <= 0) --k;
    h[k++] = pts[i];
  }
  h.resize(k - 1);
  return h;
}

struct Trusted {};

CompactSet build(std::vector<Cell> cells, std::string label, Trusted) {
  return CompactSet::trusted(std::move(cells), std::move(label));
}

}  // namespace

double Cell::measure() const {
  return degenerate() ? 2.0 * halfwidth.x() : 4.0 * halfwidth.x() * halfwidth.y();
}

bool Cell::contains(const Point& p, double dilation) const {
  return std::abs(p.x() - center.x()) <= halfwidth.x() + dilation &&
         std::abs(p.y() - center.y()) <= halfwidth.y() + dilation;
}

Eigen::AlignedBox2d Cell::box(double dilation) const {
  const Eigen::Vector2d h = halfwidth.array() + dilation;
  return {center - h, center + h};
}

std::ptrdiff_t find_overlap(const std::vector<Cell>& cells) {
  if (cells.size() < 2) return -1;
  double bucket = 0.0;
  for (const auto& c : cells) bucket = std::max({bucket, 2.0 * c.halfwidth.x(), 2.0 * c.halfwidth.y()});
  if (bucket <= 0.0) return -1;
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> grid;
  auto key = [](std::int64_t ix, std::int64_t iy) {
    return (static_cast<std::uint64_t>(ix) << 32) ^ static_cast<std::uint64_t>(iy & 0xffffffff);
  };
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& c = cells[i];
    const double shrink = kSlack * bucket;
    const auto x0 = static_cast<std::int64_t>(std::floor((c.center.x() - c.halfwidth.x() + shrink) / bucket));
    const auto x1 = static_cast<std::int64_t>(std::floor((c.center.x() + c.halfwidth.x() - shrink) / bucket));
    const auto y0 = static_cast<std::int64_t>(std::floor((c.center.y() - c.halfwidth.y()) / bucket));
    const auto y1 = static_cast<std::int64_t>(std::floor((c.center.y() + c.halfwidth.y()) / bucket));
    for (auto ix = x0; ix <= x1; ++ix)
      for (auto iy = y0; iy <= y1; ++iy) grid[key(ix, iy)].push_back(i);
  }
  std::ptrdiff_t first = -1;
  for (const auto& [k, idx] : grid) {
    for (std::size_t a = 0; a < idx.size(); ++a)
      for (std::size_t b = a + 1; b < idx.size(); ++b)
        if (interiors_meet(cells[idx[a]], cells[idx[b]])) {
          const auto lo = static_cast<std::ptrdiff_t>(std::min(idx[a], idx[b]));
          if (first < 0 || lo < first) first = lo;
        }
  }
  return first;
}

CompactSet::CompactSet(std::vector<Cell> cells, std::string label)
    : cells_(std::move(cells)), label_(std::move(label)) {
  for (const auto& c : cells_) {
    TWOGAUGE_REQUIRE(c.halfwidth.x() > 0.0 && c.halfwidth.y() >= 0.0,
                     "cell half-widths must satisfy hx > 0, hy >= 0");
    TWOGAUGE_REQUIRE(c.center.allFinite(), "cell center must be finite");
    resolution_ = std::max(resolution_, c.diameter());
  }
  if (!std::is_sorted(cells_.begin(), cells_.end(), lex_less))
    std::sort(cells_.begin(), cells_.end(), lex_less);
  TWOGAUGE_REQUIRE(find_overlap(cells_) < 0, "cells of set '" + label_ + "' overlap");
}

CompactSet CompactSet::trusted(std::vector<Cell> cells, std::string label) {
  CompactSet out;
  out.cells_ = std::move(cells);
  out.label_ = std::move(label);
  std::sort(out.cells_.begin(), out.cells_.end(), lex_less);
  for (const auto& c : out.cells_) out.resolution_ = std::max(out.resolution_, c.diameter());
  return out;
}

CompactSet& CompactSet::mark_target() {
  TWOGAUGE_REQUIRE(within_disk(Point::Zero(), kTargetRadius),
                   "target set '" + label_ + "' leaves the closed disk of radius 1/3");
  target_ = true;
  return *this;
}

double CompactSet::total_measure() const {
  double s = 0.0;
  for (const auto& c : cells_) s += c.measure();
  return s;
}

Eigen::AlignedBox2d CompactSet::bounding_box() const {
  Eigen::AlignedBox2d b;
  for (const auto& c : cells_) b.extend(c.box());
  return b;
}

double CompactSet::diameter() const {
  if (cells_.empty()) return 0.0;
  std::vector<Point> corners;
  corners.reserve(4 * cells_.size());
  for (const auto& c : cells_) {
    const double hx = c.halfwidth.x(), hy = c.halfwidth.y();
    corners.emplace_back(c.center + Point(-hx, -hy));
    corners.emplace_back(c.center + Point(hx, -hy));
    corners.emplace_back(c.center + Point(-hx, hy));
    corners.emplace_back(c.center + Point(hx, hy));
  }
  const auto h = hull(std::move(corners));
  double d = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i)
    for (std::size_t j = i + 1; j < h.size(); ++j) d = std::max(d, (h[i] - h[j]).norm());
  return d;
}

bool CompactSet::contains(const Point& p) const {
  return std::any_of(cells_.begin(), cells_.end(), [&](const Cell& c) { return c.contains(p); });
}

bool CompactSet::within_disk(const Point& c, double radius) const {
  for (const auto& cell : cells_) {
    const Point far = (cell.center - c).cwiseAbs() + cell.halfwidth;
    if (far.norm() > radius * (1.0 + kSlack)) return false;
  }
  return true;
}

CompactSet make_disk(const Point& center, double radius, double resolution) {
  TWOGAUGE_REQUIRE(radius > 0.0, "make_disk: radius must be positive");
  TWOGAUGE_REQUIRE(resolution > 0.0, "make_disk: resolution must be positive");
  TWOGAUGE_REQUIRE(resolution <= radius, "make_disk: resolution must not exceed the radius");
  const auto n = static_cast<long>(std::ceil(radius / resolution)) + 1;
  std::vector<Cell> cells;
  const Eigen::Vector2d h(resolution / 2, resolution / 2);
  for (long i = -n; i <= n; ++i)
    for (long j = -n; j <= n; ++j) {
      const Point off(static_cast<double>(i) * resolution, static_cast<double>(j) * resolution);
      if (off.norm() < radius) cells.push_back({center + off, h});
    }
  return build(std::move(cells), "disk", Trusted{});
}

double cantor_interval_length(double alpha, int depth) {
  // A_0 is the whole unit segment
  if (depth == 0) return 1.0;
  return std::exp2(-std::exp2(alpha * depth));
}

CompactSet make_cantor(double alpha, int depth) {
  TWOGAUGE_REQUIRE(alpha > 0.5 && alpha < 1.0, "make_cantor: alpha must lie in (1/2, 1)");
  TWOGAUGE_REQUIRE(depth >= 0, "make_cantor: depth must be nonnegative");
  // (center, half-length) of each interval
  std::vector<std::pair<double, double>> iv{{0.0, 0.5}};
  for (int k = 1; k <= depth; ++k) {
    const double half = cantor_interval_length(alpha, k) / 2;
    std::vector<std::pair<double, double>> next;
    next.reserve(2 * iv.size());
    for (const auto& [c, h] : iv) {
      TWOGAUGE_REQUIRE(2 * half < h, "make_cantor: children overlap at depth " + std::to_string(k));
      const double left = c - h + half, right = c + h - half;
      TWOGAUGE_REQUIRE(left - half < left && left + half < right - half && right + half > right,
                       "make_cantor: depth " + std::to_string(k) + " exceeds double precision");
      next.emplace_back(left, half);
      next.emplace_back(right, half);
    }
    iv = std::move(next);
  }
  std::vector<Cell> cells;
  cells.reserve(iv.size());
  for (const auto& [c, h] : iv) cells.push_back({Point(c, 0.0), Eigen::Vector2d(h, 0.0)});
  return build(std::move(cells), "cantor", Trusted{});
}

CompactSet make_segment(double x0, double x1, double y, double resolution) {
  TWOGAUGE_REQUIRE(x1 > x0, "make_segment: need x0 < x1");
  TWOGAUGE_REQUIRE(resolution > 0.0, "make_segment: resolution must be positive");
  const auto m = static_cast<long>(std::ceil((x1 - x0) / resolution - 1e-9));
  const double len = (x1 - x0) / static_cast<double>(std::max(m, 1L));
  std::vector<Cell> cells;
  for (long i = 0; i < std::max(m, 1L); ++i)
    cells.push_back({Point(x0 + (static_cast<double>(i) + 0.5) * len, y), Eigen::Vector2d(len / 2, 0.0)});
  return build(std::move(cells), "segment", Trusted{});
}

namespace {

void split(const Cell& c, long mx, long my, std::vector<Cell>& out) {
  const Eigen::Vector2d h(c.halfwidth.x() / static_cast<double>(mx), c.halfwidth.y() / static_cast<double>(my));
  const Point lo = c.center - c.halfwidth;
  for (long i = 0; i < mx; ++i)
    for (long j = 0; j < my; ++j)
      out.push_back({lo + Point((2 * i + 1) * h.x(), (2 * j + 1) * h.y()), h});
}

}  // namespace

CompactSet refine(const CompactSet& set, int factor) {
  TWOGAUGE_REQUIRE(factor >= 2, "refine: factor must be at least 2");
  std::vector<Cell> cells;
  for (const auto& c : set.cells()) split(c, factor, c.degenerate() ? 1 : factor, cells);
  return build(std::move(cells), set.label(), Trusted{});
}

CompactSet subdivide(const CompactSet& set, double resolution) {
  TWOGAUGE_REQUIRE(resolution > 0.0, "subdivide: resolution must be positive");
  std::vector<Cell> cells;
  for (const auto& c : set.cells()) {
    const auto m = std::max(1L, static_cast<long>(std::ceil(c.diameter() / resolution - 1e-9)));
    split(c, m, c.degenerate() ? 1 : m, cells);
  }
  return build(std::move(cells), set.label(), Trusted{});
}

CompactSet transformed(const CompactSet& set, double scale, const Point& offset) {
  TWOGAUGE_REQUIRE(scale > 0.0, "transformed: scale must be positive");
  std::vector<Cell> cells;
  cells.reserve(set.size());
  for (const auto& c : set.cells()) cells.push_back({scale * c.center + offset, scale * c.halfwidth});
  return build(std::move(cells), set.label(), Trusted{});
}

CompactSet unite(const CompactSet& a, const CompactSet& b, std::string label) {
  std::vector<Cell> cells = a.cells();
  cells.insert(cells.end(), b.cells().begin(), b.cells().end());
  return CompactSet(std::move(cells), std::move(label));
}

std::vector<Node> centers(const CompactSet& set) {
  std::vector<Node> out;
  out.reserve(set.size());
  for (const auto& c : set.cells()) out.push_back({c.center, c.diameter()});
  return out;
}

nlohmann::json to_json(const CompactSet& set) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : set.cells())
    cells.push_back({{"cx", c.center.x()}, {"cy", c.center.y()}, {"hx", c.halfwidth.x()}, {"hy", c.halfwidth.y()}});
  return {{"label", set.label()}, {"resolution", set.resolution()}, {"target", set.is_target()}, {"cells", cells}};
}

CompactSet set_from_json(const nlohmann::json& doc) {
  TWOGAUGE_REQUIRE(doc.is_object() && doc.contains("cells") && doc["cells"].is_array(),
                   "set document needs a 'cells' array");
  std::vector<Cell> cells;
  for (const auto& c : doc["cells"]) {
    TWOGAUGE_REQUIRE(c.contains("cx") && c.contains("cy") && c.contains("hx") && c.contains("hy"),
                     "set cell needs cx, cy, hx, hy");
    Cell cell;
    cell.center = Point(c["cx"].get<double>(), c["cy"].get<double>());
    cell.halfwidth = Eigen::Vector2d(c["hx"].get<double>(), c["hy"].get<double>());
    cells.push_back(cell);
  }
  CompactSet set(std::move(cells), doc.value("label", std::string("set")));
  if (doc.value("target", false)) set.mark_target();
  return set;
}

}  // namespace twogauge
