#pragma once

#include "twogauge/geometry.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace twogauge {

using Rng = std::mt19937_64;

std::uint64_t splitmix64(std::uint64_t x);
/// Independent generator for replicate `stream` of a run seeded with `seed`.
Rng make_rng(std::uint64_t seed, std::uint64_t stream);

inline constexpr double kExitRadius = 3.0;
inline constexpr std::int64_t kStepCap = 1'000'000'000;

/// Time-ordered positions of one path, stopped at the first point outside
/// the exit disk.
struct Trajectory {
  Point start = Point(1.0, 0.0);
  double dt = 0.0;
  std::vector<double> times;
  std::vector<Point> points;
  std::size_t stopped_at = 0;
  std::uint64_t rng_seed = 0;
  std::uint64_t rng_stream = 0;
};

/// Gaussian random walk with per-coordinate step deviation sqrt(dt), stopped
/// at the first index with |position| >= exit_radius.
Trajectory sample_path(const Point& start, double dt, Rng& rng, double exit_radius = kExitRadius);
Trajectory sample_path(const Point& start, double dt, std::uint64_t seed, std::uint64_t stream,
                       double exit_radius = kExitRadius);

/// Exit time of planar Brownian motion from the unit disk, started at the
/// center; sampled by inversion of a tabulated distribution function.
class UnitDiskExitTime {
 public:
  static const UnitDiskExitTime& instance();
  double sample(Rng& rng) const;
  /// P(T > t)
  double survival(double t) const;

 private:
  UnitDiskExitTime();
  std::vector<double> zeros_, coef_;
  std::vector<double> t_, cdf_;
};

/// Targets seen by a path: numbered cells, a lower bound on the distance to
/// their union, and membership of a point.
class TargetRegion {
 public:
  virtual ~TargetRegion() = default;
  virtual std::size_t size() const = 0;
  /// Lower bound on the distance from p to every target cell.
  virtual double clearance(const Point& p) const = 0;
  /// Appends the indices of the cells containing p.
  virtual void visits(const Point& p, std::vector<std::int32_t>& out) const = 0;
};

/// The cells of a set, each dilated by its own eta, located through a bucket
/// grid.
class CellTargets : public TargetRegion {
 public:
  /// eta > 0 dilates every cell by eta. Otherwise square cells use their
  /// half-width and segment cells use segment_eta (which must then be positive).
  explicit CellTargets(const CompactSet& set, double eta = 0.0, double segment_eta = 0.0);

  std::size_t size() const override { return boxes_.size(); }
  double clearance(const Point& p) const override;
  void visits(const Point& p, std::vector<std::int32_t>& out) const override;
  /// Dilation applied to cell i.
  double eta(std::size_t i) const { return eta_[i]; }
  /// Default step: (d / 4)^2 with d the smallest of cell sizes and dilations.
  double default_dt() const;

 private:
  std::int64_t bucket_of(std::int64_t bx, std::int64_t by) const { return by * nx_ + bx; }
  double box_distance(std::size_t i, const Point& p) const;

  std::vector<Eigen::AlignedBox2d> boxes_;
  std::vector<double> eta_, size_;
  Eigen::AlignedBox2d bounds_;
  double bucket_ = 1.0;
  std::int64_t nx_ = 0, ny_ = 0;
  std::vector<std::int32_t> start_, items_;  // CSR lists of boxes per bucket
  std::vector<std::int32_t> ring_;           // Chebyshev distance to an occupied bucket
};

/// Closed disks of a common radius.
class BallTargets : public TargetRegion {
 public:
  BallTargets(std::vector<Point> centers, double radius);
  std::size_t size() const override { return centers_.size(); }
  double clearance(const Point& p) const override;
  void visits(const Point& p, std::vector<std::int32_t>& out) const override;

 private:
  std::vector<Point> centers_;
  double radius_;
};

struct WalkOptions {
  double dt = 1e-4;
  double exit_radius = kExitRadius;
  /// Jump across target-free disks (walk on spheres) instead of stepping.
  bool accelerated = true;
  /// Gaussian steps are taken within fine_zone * sqrt(dt) of a target or of
  /// the exit circle.
  double fine_zone = 4.0;
};

struct WalkSummary {
  double exit_time = 0.0;
  Point exit_point = Point::Zero();
  std::int64_t steps = 0;
  std::int64_t jumps = 0;
  bool stopped = false;  // the observer ended the walk
};

/// Called at every recorded point that lies in at least one target cell; a
/// true return ends the walk.
using VisitObserver = std::function<bool(double t, const Point& p, std::span<const std::int32_t> cells)>;

/// Runs one path from `start` until it leaves the exit disk. Away from the
/// targets and the exit circle the accelerated walk jumps to a uniform point
/// on the largest target-free circle, advancing time by an exact exit-time
/// draw; near them it takes Gaussian steps of variance dt per coordinate.
WalkSummary walk(const Point& start, const WalkOptions& opts, const TargetRegion* targets, Rng& rng,
                 const VisitObserver& observer = {});

/// Records every point of an accelerated walk.
Trajectory sample_accelerated(const Point& start, const WalkOptions& opts, const TargetRegion& targets,
                              std::uint64_t seed, std::uint64_t stream);

struct HitEvent {
  enum class Kind { SingleVisit, EpsDouble, TwoPathIntersection };
  Kind kind = Kind::SingleVisit;
  std::int32_t cell = -1;
  std::vector<double> times;
};

/// Tracks visit-pair events cell by cell: a cell fires once it is visited at
/// times r < s with s - r >= eps^2.
class EpsDoubleTracker {
 public:
  EpsDoubleTracker(std::size_t cells, double eps);
  /// Returns true when this visit completes the first pair in some cell.
  bool visit(double t, std::span<const std::int32_t> cells);
  void reset();
  bool fired() const { return first_event_.has_value(); }
  std::size_t fired_count() const { return fired_count_; }
  const std::optional<HitEvent>& first_event() const { return first_event_; }
  /// Cells that have fired, ascending.
  std::vector<std::int32_t> fired_cells() const;

 private:
  double sep_;
  std::vector<double> first_;
  std::vector<char> done_;
  std::vector<std::int32_t> touched_;
  std::size_t fired_count_ = 0;
  std::optional<HitEvent> first_event_;
};

struct Detection {
  bool hit = false;
  std::optional<HitEvent> event;
};

/// Visit-pair event on a stored trajectory.
Detection detect_eps_double(const Trajectory& traj, const CompactSet& set, double eps, double eta = 0.0,
                            double segment_eta = 0.0);
Detection detect_eps_double(const Trajectory& traj, const TargetRegion& targets, double eps);

/// Some dilated cell visited by both trajectories.
Detection detect_intersection(const Trajectory& a, const Trajectory& b, const CompactSet& set, double eta = 0.0,
                              double segment_eta = 0.0);
Detection detect_intersection(const Trajectory& a, const Trajectory& b, const TargetRegion& targets);

/// Binary dump: magic "TGTRJ1", dt, seed, stream, count, then (t, x, y)
/// doubles. At most max_points points are written.
void write_trajectory(std::ostream& out, const Trajectory& traj, std::size_t max_points = 1'000'000);
Trajectory read_trajectory(std::istream& in);

}  // namespace twogauge
