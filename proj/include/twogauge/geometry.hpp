#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <json.hpp>

#include <cstddef>
#include <string>
#include <vector>

namespace twogauge {

using Point = Eigen::Vector2d;

/// Closed axis-aligned cell. A zero half-height marks a horizontal segment.
struct Cell {
  Point center = Point::Zero();
  Eigen::Vector2d halfwidth = Eigen::Vector2d::Zero();

  bool degenerate() const { return halfwidth.y() == 0.0; }
  double diameter() const { return 2.0 * halfwidth.norm(); }
  /// Area for square cells, length for segment cells.
  double measure() const;
  /// Membership in the cell dilated by `dilation` in every direction.
  bool contains(const Point& p, double dilation = 0.0) const;
  Eigen::AlignedBox2d box(double dilation = 0.0) const;
};

/// Quadrature node: a cell center together with the cell diameter.
struct Node {
  Point x;
  double diameter;
};

/// A compact planar set stored as a finite union of cells with disjoint
/// interiors, kept in lexicographic order of cell centers.
class CompactSet {
 public:
  CompactSet() = default;
  /// Sorts the cells and checks the disjoint-interior invariant.
  CompactSet(std::vector<Cell> cells, std::string label);
  /// Skips the overlap check; the caller guarantees disjoint interiors.
  static CompactSet trusted(std::vector<Cell> cells, std::string label);

  const std::vector<Cell>& cells() const { return cells_; }
  const Cell& operator[](std::size_t i) const { return cells_[i]; }
  std::size_t size() const { return cells_.size(); }
  bool empty() const { return cells_.empty(); }

  /// Maximum cell diameter (0 for the empty set).
  double resolution() const { return resolution_; }
  const std::string& label() const { return label_; }
  void set_label(std::string label) { label_ = std::move(label); }

  /// Target sets must lie in the closed disk of radius 1/3 about the origin.
  bool is_target() const { return target_; }
  /// Flags the set as a target; throws PreconditionError if it leaves the disk.
  CompactSet& mark_target();

  double total_measure() const;
  /// Euclidean diameter of the union of cells.
  double diameter() const;
  Eigen::AlignedBox2d bounding_box() const;
  bool contains(const Point& p) const;
  bool within_disk(const Point& c, double radius) const;

 private:
  std::vector<Cell> cells_;
  std::string label_;
  double resolution_ = 0.0;
  bool target_ = false;
};

inline constexpr double kTargetRadius = 1.0 / 3.0;

/// Grid cells of side `resolution`, aligned so that one cell is centered at
/// `center`, whose centers lie strictly inside the disk.
CompactSet make_disk(const Point& center, double radius, double resolution);

/// The n-th stage A_n of the two-ended Cantor construction on
/// [-1/2, 1/2] x {0}: 2^n segment cells of length 2^(-2^(alpha n)).
CompactSet make_cantor(double alpha, int depth);

/// Length of one interval of the Cantor stage A_n (1 for n = 0).
double cantor_interval_length(double alpha, int depth);

/// Horizontal segment [x0, x1] x {y} cut into pieces of length <= resolution.
CompactSet make_segment(double x0, double x1, double y, double resolution);

/// Splits each cell into factor^2 congruent children (factor for segments).
CompactSet refine(const CompactSet& set, int factor);

/// Splits each cell into the fewest congruent children of diameter at most
/// `resolution` along each axis.
CompactSet subdivide(const CompactSet& set, double resolution);

/// Image of the set under x -> scale * x + offset (scale > 0).
CompactSet transformed(const CompactSet& set, double scale, const Point& offset);

/// Union of two sets with disjoint interiors.
CompactSet unite(const CompactSet& a, const CompactSet& b, std::string label);

/// One node per cell, in the set's lexicographic order.
std::vector<Node> centers(const CompactSet& set);

/// Returns the index of the first pair of cells with intersecting interiors,
/// or -1 when the cells are pairwise disjoint.
std::ptrdiff_t find_overlap(const std::vector<Cell>& cells);

/// {label, resolution, target, cells: [{cx, cy, hx, hy}]}. Doubles are
/// written in shortest round-trip form, so reading back is lossless.
nlohmann::json to_json(const CompactSet& set);
/// Inverse of to_json; validates cells and disjointness.
CompactSet set_from_json(const nlohmann::json& doc);

}  // namespace twogauge
