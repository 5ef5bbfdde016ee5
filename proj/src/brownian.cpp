#include "twogauge/brownian.hpp"

#include "twogauge/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <deque>
#include <istream>
#include <numbers>
#include <ostream>

namespace twogauge {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(splitmix64(seed)), static_cast<std::uint32_t>(splitmix64(seed) >> 32),
                    static_cast<std::uint32_t>(splitmix64(seed ^ splitmix64(stream))),
                    static_cast<std::uint32_t>(splitmix64(seed ^ splitmix64(stream)) >> 32)};
  return Rng(seq);
}

Trajectory sample_path(const Point& start, double dt, Rng& rng, double exit_radius) {
  TWOGAUGE_REQUIRE(dt > 0.0 && dt <= 1e-2, "sample_path: dt must lie in (0, 1e-2]");
  TWOGAUGE_REQUIRE(start.norm() < exit_radius, "sample_path: start must lie inside the exit disk");
  Trajectory tr;
  tr.start = start;
  tr.dt = dt;
  tr.times.push_back(0.0);
  tr.points.push_back(start);
  std::normal_distribution<double> step(0.0, std::sqrt(dt));
  Point x = start;
  for (std::int64_t i = 1;; ++i) {
    if (i > kStepCap) throw Error("sample_path: step cap of " + std::to_string(kStepCap) + " reached");
    const double dx = step(rng);
    const double dy = step(rng);
    x += Point(dx, dy);
    tr.times.push_back(static_cast<double>(i) * dt);
    tr.points.push_back(x);
    if (x.norm() >= exit_radius) break;
  }
  tr.stopped_at = tr.points.size() - 1;
  return tr;
}

Trajectory sample_path(const Point& start, double dt, std::uint64_t seed, std::uint64_t stream,
                       double exit_radius) {
  Rng rng = make_rng(seed, stream);
  Trajectory tr = sample_path(start, dt, rng, exit_radius);
  tr.rng_seed = seed;
  tr.rng_stream = stream;
  return tr;
}

// ---------------------------------------------------------------------------

namespace {

constexpr int kBesselZeros = 300;
constexpr int kTimeGrid = 16384;
constexpr double kTimeLow = 0.004;
constexpr double kTimeHigh = 4.0;

double bessel_j0_zero(int n) {
  double x = (n - 0.25) * std::numbers::pi;
  for (int it = 0; it < 50; ++it) {
    const double step = std::cyl_bessel_j(0.0, x) / -std::cyl_bessel_j(1.0, x);
    x -= step;
    if (std::abs(step) < 1e-15 * x) break;
  }
  return x;
}

}  // namespace

UnitDiskExitTime::UnitDiskExitTime() {
  for (int n = 1; n <= kBesselZeros; ++n) {
    const double j = bessel_j0_zero(n);
    zeros_.push_back(j);
    coef_.push_back(2.0 / (j * std::cyl_bessel_j(1.0, j)));
  }
  t_.resize(kTimeGrid);
  cdf_.resize(kTimeGrid);
  double prev = 0.0;
  for (int k = 0; k < kTimeGrid; ++k) {
    const double t = kTimeLow + (kTimeHigh - kTimeLow) * k / (kTimeGrid - 1);
    t_[static_cast<std::size_t>(k)] = t;
    prev = std::max(prev, std::clamp(1.0 - survival(t), 0.0, 1.0));
    cdf_[static_cast<std::size_t>(k)] = prev;
  }
}

const UnitDiskExitTime& UnitDiskExitTime::instance() {
  static const UnitDiskExitTime table;
  return table;
}

double UnitDiskExitTime::survival(double t) const {
  if (t <= 0.0) return 1.0;
  double s = 0.0;
  for (std::size_t n = 0; n < zeros_.size(); ++n) {
    const double e = zeros_[n] * zeros_[n] * t / 2;
    if (e > 745.0) break;
    s += coef_[n] * std::exp(-e);
  }
  return std::clamp(s, 0.0, 1.0);
}

double UnitDiskExitTime::sample(Rng& rng) const {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  if (u >= cdf_.back()) {
    // single-mode tail
    const double j = zeros_.front();
    return -2.0 * std::log((1.0 - u) / coef_.front()) / (j * j);
  }
  if (u <= cdf_.front()) return t_.front();
  const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  const auto k = static_cast<std::size_t>(it - cdf_.begin());
  const double c0 = cdf_[k - 1], c1 = cdf_[k];
  const double a = c1 > c0 ? (u - c0) / (c1 - c0) : 0.0;
  return t_[k - 1] + a * (t_[k] - t_[k - 1]);
}

// ---------------------------------------------------------------------------

CellTargets::CellTargets(const CompactSet& set, double eta, double segment_eta) {
  TWOGAUGE_REQUIRE(!set.empty(), "CellTargets: empty set");
  boxes_.reserve(set.size());
  for (const auto& c : set.cells()) {
    double e = eta;
    if (e <= 0.0) {
      e = c.degenerate() ? segment_eta : c.halfwidth.x();
      TWOGAUGE_REQUIRE(e > 0.0, "CellTargets: segment cells need a positive dilation");
    }
    eta_.push_back(e);
    size_.push_back(2.0 * c.halfwidth.x());
    boxes_.push_back(c.box(e));
  }
  bounds_ = boxes_.front();
  std::vector<double> widths;
  for (const auto& b : boxes_) {
    bounds_.extend(b);
    widths.push_back(b.sizes().maxCoeff());
  }
  std::nth_element(widths.begin(), widths.begin() + static_cast<std::ptrdiff_t>(widths.size() / 2), widths.end());
  const Eigen::Vector2d extent = bounds_.sizes();
  bucket_ = std::max({widths[widths.size() / 2], extent.maxCoeff() / 2048.0, 1e-12});
  nx_ = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(extent.x() / bucket_)));
  ny_ = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(extent.y() / bucket_)));

  auto range = [&](const Eigen::AlignedBox2d& b, std::int64_t& x0, std::int64_t& x1, std::int64_t& y0,
                   std::int64_t& y1) {
    auto clampx = [&](double v) { return std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(v)), 0, nx_ - 1); };
    auto clampy = [&](double v) { return std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(v)), 0, ny_ - 1); };
    x0 = clampx((b.min().x() - bounds_.min().x()) / bucket_);
    x1 = clampx((b.max().x() - bounds_.min().x()) / bucket_);
    y0 = clampy((b.min().y() - bounds_.min().y()) / bucket_);
    y1 = clampy((b.max().y() - bounds_.min().y()) / bucket_);
  };
  const auto nb = static_cast<std::size_t>(nx_ * ny_);
  std::vector<std::int32_t> count(nb + 1, 0);
  for (const auto& b : boxes_) {
    std::int64_t x0, x1, y0, y1;
    range(b, x0, x1, y0, y1);
    for (auto by = y0; by <= y1; ++by)
      for (auto bx = x0; bx <= x1; ++bx) ++count[static_cast<std::size_t>(bucket_of(bx, by)) + 1];
  }
  for (std::size_t k = 1; k <= nb; ++k) count[k] += count[k - 1];
  start_ = count;
  items_.resize(static_cast<std::size_t>(count[nb]));
  for (std::size_t i = 0; i < boxes_.size(); ++i) {
    std::int64_t x0, x1, y0, y1;
    range(boxes_[i], x0, x1, y0, y1);
    for (auto by = y0; by <= y1; ++by)
      for (auto bx = x0; bx <= x1; ++bx)
        items_[static_cast<std::size_t>(count[static_cast<std::size_t>(bucket_of(bx, by))]++)] =
            static_cast<std::int32_t>(i);
  }

  // multi-source breadth-first search in the king-move metric
  ring_.assign(nb, -1);
  std::deque<std::int64_t> queue;
  for (std::size_t k = 0; k < nb; ++k)
    if (start_[k + 1] > start_[k]) {
      ring_[k] = 0;
      queue.push_back(static_cast<std::int64_t>(k));
    }
  while (!queue.empty()) {
    const auto k = queue.front();
    queue.pop_front();
    const auto bx = k % nx_, by = k / nx_;
    for (std::int64_t dy = -1; dy <= 1; ++dy)
      for (std::int64_t dx = -1; dx <= 1; ++dx) {
        const auto x = bx + dx, y = by + dy;
        if (x < 0 || y < 0 || x >= nx_ || y >= ny_) continue;
        auto& r = ring_[static_cast<std::size_t>(bucket_of(x, y))];
        if (r < 0) {
          r = ring_[static_cast<std::size_t>(k)] + 1;
          queue.push_back(bucket_of(x, y));
        }
      }
  }
}

double CellTargets::box_distance(std::size_t i, const Point& p) const {
  return boxes_[i].exteriorDistance(p);
}

double CellTargets::clearance(const Point& p) const {
  const Point q = p.cwiseMax(bounds_.min()).cwiseMin(bounds_.max());
  const double outside = (p - q).norm();
  const auto bx = std::clamp<std::int64_t>(static_cast<std::int64_t>((q.x() - bounds_.min().x()) / bucket_), 0, nx_ - 1);
  const auto by = std::clamp<std::int64_t>(static_cast<std::int64_t>((q.y() - bounds_.min().y()) / bucket_), 0, ny_ - 1);
  const std::int32_t ring = ring_[static_cast<std::size_t>(bucket_of(bx, by))];
  if (ring >= 3) return std::max(outside, (ring - 1) * bucket_);
  // boxes registered more than two buckets away lie at least two buckets off
  double best = std::max(outside, 2.0 * bucket_);
  for (auto y = std::max<std::int64_t>(0, by - 2); y <= std::min(ny_ - 1, by + 2); ++y)
    for (auto x = std::max<std::int64_t>(0, bx - 2); x <= std::min(nx_ - 1, bx + 2); ++x) {
      const auto k = static_cast<std::size_t>(bucket_of(x, y));
      for (auto s = start_[k]; s < start_[k + 1]; ++s)
        best = std::min(best, box_distance(static_cast<std::size_t>(items_[static_cast<std::size_t>(s)]), p));
    }
  return best;
}

void CellTargets::visits(const Point& p, std::vector<std::int32_t>& out) const {
  if (!bounds_.contains(p)) return;
  const auto bx = std::min<std::int64_t>(static_cast<std::int64_t>((p.x() - bounds_.min().x()) / bucket_), nx_ - 1);
  const auto by = std::min<std::int64_t>(static_cast<std::int64_t>((p.y() - bounds_.min().y()) / bucket_), ny_ - 1);
  const auto k = static_cast<std::size_t>(bucket_of(bx, by));
  for (auto s = start_[k]; s < start_[k + 1]; ++s) {
    const auto i = items_[static_cast<std::size_t>(s)];
    if (boxes_[static_cast<std::size_t>(i)].contains(p)) out.push_back(i);
  }
}

double CellTargets::default_dt() const {
  double d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < boxes_.size(); ++i) d = std::min({d, size_[i], eta_[i]});
  return (d / 4) * (d / 4);
}

BallTargets::BallTargets(std::vector<Point> centers, double radius) : centers_(std::move(centers)), radius_(radius) {
  TWOGAUGE_REQUIRE(radius > 0.0, "BallTargets: radius must be positive");
  TWOGAUGE_REQUIRE(!centers_.empty(), "BallTargets: no centers");
}

double BallTargets::clearance(const Point& p) const {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& c : centers_) best = std::min(best, (p - c).norm() - radius_);
  return std::max(best, 0.0);
}

void BallTargets::visits(const Point& p, std::vector<std::int32_t>& out) const {
  for (std::size_t i = 0; i < centers_.size(); ++i)
    if ((p - centers_[i]).norm() <= radius_) out.push_back(static_cast<std::int32_t>(i));
}

// ---------------------------------------------------------------------------

namespace {

WalkSummary walk_impl(const Point& start, const WalkOptions& opts, const TargetRegion* targets, Rng& rng,
                      const VisitObserver& observer, Trajectory* record) {
  TWOGAUGE_REQUIRE(opts.dt > 0.0, "walk: dt must be positive");
  TWOGAUGE_REQUIRE(start.norm() < opts.exit_radius, "walk: start must lie inside the exit disk");
  const double sigma = std::sqrt(opts.dt);
  const double zone = opts.fine_zone * sigma;
  const double R = opts.exit_radius;
  const auto& exit_time = UnitDiskExitTime::instance();
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  std::vector<std::int32_t> cells;

  WalkSummary s;
  Point x = start;
  double t = 0.0;
  auto visit = [&]() {
    if (record) {
      record->times.push_back(t);
      record->points.push_back(x);
    }
    if (!targets) return false;
    cells.clear();
    targets->visits(x, cells);
    return !cells.empty() && observer && observer(t, x, cells);
  };
  auto finish = [&](bool stopped) {
    s.exit_time = t;
    s.exit_point = x;
    s.stopped = stopped;
    if (record) record->stopped_at = record->points.size() - 1;
    return s;
  };

  if (visit()) return finish(true);
  const double inf = std::numeric_limits<double>::infinity();
  double c_ref = targets ? targets->clearance(x) : inf;
  Point x_ref = x;
  for (;;) {
    bool fine = !opts.accelerated;
    double radius = 0.0;
    if (!fine) {
      const double r_exit = R - x.norm();
      if (r_exit <= zone) {
        fine = true;
      } else if (c_ref + (x - x_ref).norm() <= zone) {
        fine = true;
      } else {
        if (targets) {
          c_ref = targets->clearance(x);
          x_ref = x;
        }
        radius = std::min(c_ref, r_exit);
        fine = radius <= zone;
      }
    }
    if (fine) {
      if (++s.steps > kStepCap) throw Error("walk: step cap of " + std::to_string(kStepCap) + " reached");
      const double dx = gauss(rng);
      const double dy = gauss(rng);
      x += sigma * Point(dx, dy);
      t += opts.dt;
      if (x.norm() >= R) {
        if (record) {
          record->times.push_back(t);
          record->points.push_back(x);
        }
        return finish(false);
      }
    } else {
      ++s.jumps;
      const double a = angle(rng);
      x += radius * Point(std::cos(a), std::sin(a));
      t += radius * radius * exit_time.sample(rng);
      if (x.norm() >= R * (1.0 - 1e-12)) {
        if (record) {
          record->times.push_back(t);
          record->points.push_back(x);
        }
        return finish(false);
      }
      if (targets) {
        c_ref = targets->clearance(x);
        x_ref = x;
      }
    }
    if (visit()) return finish(true);
  }
}

}  // namespace

WalkSummary walk(const Point& start, const WalkOptions& opts, const TargetRegion* targets, Rng& rng,
                 const VisitObserver& observer) {
  return walk_impl(start, opts, targets, rng, observer, nullptr);
}

Trajectory sample_accelerated(const Point& start, const WalkOptions& opts, const TargetRegion& targets,
                              std::uint64_t seed, std::uint64_t stream) {
  Rng rng = make_rng(seed, stream);
  Trajectory tr;
  tr.start = start;
  tr.dt = opts.dt;
  tr.rng_seed = seed;
  tr.rng_stream = stream;
  walk_impl(start, opts, &targets, rng, {}, &tr);
  return tr;
}

// ---------------------------------------------------------------------------

EpsDoubleTracker::EpsDoubleTracker(std::size_t cells, double eps)
    : sep_(eps * eps), first_(cells, std::numeric_limits<double>::quiet_NaN()), done_(cells, 0) {
  TWOGAUGE_REQUIRE(eps > 0.0, "eps must be positive");
}

bool EpsDoubleTracker::visit(double t, std::span<const std::int32_t> cells) {
  bool completed_first = false;
  for (auto c : cells) {
    const auto i = static_cast<std::size_t>(c);
    if (std::isnan(first_[i])) {
      first_[i] = t;
      touched_.push_back(c);
    } else if (!done_[i] && t - first_[i] >= sep_) {
      done_[i] = 1;
      ++fired_count_;
      if (!first_event_) {
        first_event_ = HitEvent{HitEvent::Kind::EpsDouble, c, {first_[i], t}};
        completed_first = true;
      }
    }
  }
  return completed_first;
}

void EpsDoubleTracker::reset() {
  for (auto c : touched_) {
    first_[static_cast<std::size_t>(c)] = std::numeric_limits<double>::quiet_NaN();
    done_[static_cast<std::size_t>(c)] = 0;
  }
  touched_.clear();
  fired_count_ = 0;
  first_event_.reset();
}

std::vector<std::int32_t> EpsDoubleTracker::fired_cells() const {
  std::vector<std::int32_t> out;
  for (auto c : touched_)
    if (done_[static_cast<std::size_t>(c)]) out.push_back(c);
  std::sort(out.begin(), out.end());
  return out;
}

Detection detect_eps_double(const Trajectory& traj, const TargetRegion& targets, double eps) {
  EpsDoubleTracker tracker(targets.size(), eps);
  std::vector<std::int32_t> cells;
  const std::size_t n = std::min(traj.points.size(), traj.stopped_at + 1);
  for (std::size_t i = 0; i < n; ++i) {
    cells.clear();
    targets.visits(traj.points[i], cells);
    if (!cells.empty() && tracker.visit(traj.times[i], cells)) return {true, tracker.first_event()};
  }
  return {};
}

Detection detect_eps_double(const Trajectory& traj, const CompactSet& set, double eps, double eta,
                            double segment_eta) {
  if (set.empty()) return {};
  return detect_eps_double(traj, CellTargets(set, eta, segment_eta), eps);
}

Detection detect_intersection(const Trajectory& a, const Trajectory& b, const TargetRegion& targets) {
  std::vector<double> seen(targets.size(), std::numeric_limits<double>::quiet_NaN());
  std::vector<std::int32_t> cells;
  const std::size_t na = std::min(a.points.size(), a.stopped_at + 1);
  for (std::size_t i = 0; i < na; ++i) {
    cells.clear();
    targets.visits(a.points[i], cells);
    for (auto c : cells)
      if (std::isnan(seen[static_cast<std::size_t>(c)])) seen[static_cast<std::size_t>(c)] = a.times[i];
  }
  const std::size_t nb = std::min(b.points.size(), b.stopped_at + 1);
  for (std::size_t i = 0; i < nb; ++i) {
    cells.clear();
    targets.visits(b.points[i], cells);
    for (auto c : cells)
      if (!std::isnan(seen[static_cast<std::size_t>(c)]))
        return {true, HitEvent{HitEvent::Kind::TwoPathIntersection, c, {seen[static_cast<std::size_t>(c)], b.times[i]}}};
  }
  return {};
}

Detection detect_intersection(const Trajectory& a, const Trajectory& b, const CompactSet& set, double eta,
                              double segment_eta) {
  if (set.empty()) return {};
  return detect_intersection(a, b, CellTargets(set, eta, segment_eta));
}

// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'T', 'G', 'T', 'R', 'J', '1', 0, 0};

template <class T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw Error("trajectory dump truncated");
  return v;
}

}  // namespace

void write_trajectory(std::ostream& out, const Trajectory& traj, std::size_t max_points) {
  const std::size_t n = std::min({traj.points.size(), traj.stopped_at + 1, max_points});
  out.write(kMagic, sizeof kMagic);
  put(out, traj.dt);
  put(out, traj.rng_seed);
  put(out, traj.rng_stream);
  put(out, static_cast<std::uint64_t>(n));
  for (std::size_t i = 0; i < n; ++i) {
    put(out, traj.times[i]);
    put(out, traj.points[i].x());
    put(out, traj.points[i].y());
  }
}

Trajectory read_trajectory(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) throw Error("not a trajectory dump");
  Trajectory tr;
  tr.dt = get<double>(in);
  tr.rng_seed = get<std::uint64_t>(in);
  tr.rng_stream = get<std::uint64_t>(in);
  const auto n = get<std::uint64_t>(in);
  for (std::uint64_t i = 0; i < n; ++i) {
    tr.times.push_back(get<double>(in));
    const double x = get<double>(in);
    const double y = get<double>(in);
    tr.points.emplace_back(x, y);
  }
  if (!tr.points.empty()) {
    tr.start = tr.points.front();
    tr.stopped_at = tr.points.size() - 1;
  }
  return tr;
}

}  // namespace twogauge
