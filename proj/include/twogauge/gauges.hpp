#pragma once

#include "twogauge/geometry.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace twogauge {

namespace detail {
class LatticeConvolver;
}

/// A decreasing positive function of distance on (0, 1), used as the radial
/// profile of a kernel K(x, y) = f(|x - y|). Natural logarithms unless a base
/// is given explicitly.
class Gauge {
 public:
  enum class Kind { Log, LogSquared, Power, Hybrid };

  static Gauge log(double base = 0.0);
  static Gauge log_squared(double base = 0.0);
  static Gauge power(double alpha);
  /// f above the knee eps, g * f(eps) / g(eps) below it. Requires f <= g on (0, eps].
  static Gauge hybrid(const Gauge& f, const Gauge& g, double eps);
  /// Parses "log", "log2", "pow:<alpha>", "hyb:<f>-><g>:<eps>" (the arrow may
  /// also be written as U+2192).
  static Gauge parse(std::string_view descriptor);

  Kind kind() const { return kind_; }
  double alpha() const { return alpha_; }
  double eps() const { return eps_; }
  const Gauge& outer() const { return *f_; }
  const Gauge& inner() const { return *g_; }

  /// Checked evaluation; rejects r outside (0, 1).
  double operator()(double r) const;
  /// Unchecked evaluation for r > 0.
  double value(double r) const noexcept {
    switch (kind_) {
      case Kind::Log: return -std::log(r) * inv_log_base_;
      case Kind::LogSquared: {
        const double l = std::log(r) * inv_log_base_;
        return l * l;
      }
      case Kind::Power: return std::pow(r, -alpha_);
      case Kind::Hybrid: return r >= eps_ ? f_->value(r) : g_->value(r) * knee_scale_;
    }
    return 0.0;
  }

  std::string descriptor() const;

 private:
  Kind kind_ = Kind::Log;
  double alpha_ = 0.0;
  double eps_ = 0.0;
  double inv_log_base_ = 1.0;
  double knee_scale_ = 1.0;
  std::shared_ptr<const Gauge> f_, g_;
};

/// Half the side of a square cell. At theta = 1/2 the diagonal falls too close
/// to the nearest-neighbour entries and square-lattice kernels stop being
/// conditionally positive definite.
inline constexpr double kDefaultTheta = 0.35355339059327373;

/// Kernel matrix K(i, j) = gauge(|x_i - x_j|) on the nodes of a set, with the
/// diagonal rule K(i, i) = gauge(theta * diameter_i).
///
/// Small problems are stored densely. Larger ones are evaluated on demand; when
/// every node sits on one uniform lattice of congruent cells, entries come from
/// a precomputed offset table instead of the gauge.
class KernelMatrix {
 public:
  enum class Storage { Dense, Lattice, Implicit };

  KernelMatrix() = default;
  KernelMatrix(std::vector<Node> nodes, Gauge gauge, double theta, std::size_t dense_limit = 4096);
  /// Wraps an explicit matrix (e.g. a symmetrized Martin kernel).
  KernelMatrix(std::vector<Node> nodes, Eigen::MatrixXd entries, std::string description);

  Eigen::Index size() const { return static_cast<Eigen::Index>(nodes_.size()); }
  const std::vector<Node>& nodes() const { return nodes_; }
  Storage storage() const { return storage_; }
  double theta() const { return theta_; }
  const std::string& description() const { return description_; }
  bool has_gauge() const { return gauge_ != nullptr; }
  const Gauge& gauge() const { return *gauge_; }

  double operator()(Eigen::Index i, Eigen::Index j) const;
  double diagonal(Eigen::Index i) const { return diag_[static_cast<std::size_t>(i)]; }
  /// Writes column j into `out` (length size()).
  void column(Eigen::Index j, Eigen::Ref<Eigen::VectorXd> out) const;
  /// out += scale * K(:, j)
  void add_column(Eigen::Index j, double scale, Eigen::Ref<Eigen::VectorXd> out) const;
  /// K * w, skipping zero weights.
  Eigen::VectorXd apply(const Eigen::VectorXd& w) const;
  /// K(:, idx) * w_sub
  Eigen::VectorXd apply_columns(std::span<const Eigen::Index> idx, const Eigen::VectorXd& w_sub) const;
  /// True when the nodes sit on a uniform lattice whose periodic kernel
  /// operator is positive definite.
  bool has_preconditioner() const;
  /// Inverse of the periodic lattice kernel applied to r; approximates K^{-1}.
  Eigen::VectorXd apply_preconditioner(const Eigen::VectorXd& r) const;
  /// The principal submatrix K(idx, idx).
  Eigen::MatrixXd block(std::span<const Eigen::Index> idx) const;
  /// Full dense copy; intended for small kernels.
  Eigen::MatrixXd to_dense() const;

 private:
  double entry_unchecked(Eigen::Index i, Eigen::Index j) const;
  bool build_lattice(double step, bool with_table);

  std::vector<Node> nodes_;
  std::shared_ptr<const Gauge> gauge_;
  double theta_ = kDefaultTheta;
  Storage storage_ = Storage::Dense;
  std::string description_;
  Eigen::MatrixXd dense_;
  std::vector<double> diag_;
  // lattice storage
  std::vector<std::int32_t> ix_, iy_;
  std::vector<double> table_;
  std::int64_t table_stride_ = 0;
  std::shared_ptr<const detail::LatticeConvolver> conv_;
};

/// Builds the kernel matrix on the cell centers of `set`. Rejects duplicate
/// centers and node pairs at distance >= 1.
KernelMatrix kernel_matrix(const CompactSet& set, const Gauge& gauge, double theta = kDefaultTheta);

/// The gauge's Martin kernel at base point xi:
/// M(x, y) = gauge(|x - y|) / gauge(|xi - y|).
class MartinKernel {
 public:
  MartinKernel(Gauge gauge, Point xi) : gauge_(std::move(gauge)), xi_(std::move(xi)) {}
  /// Throws PreconditionError when y == xi or x == y.
  double operator()(const Point& x, const Point& y) const;
  const Point& base() const { return xi_; }
  const Gauge& gauge() const { return gauge_; }

 private:
  Gauge gauge_;
  Point xi_;
};

MartinKernel martin_kernel(const Gauge& gauge, const Point& xi);

}  // namespace twogauge
