#pragma once

#include "twogauge/gauges.hpp"
#include "twogauge/geometry.hpp"

#include <Eigen/Core>
#include <json.hpp>

#include <string>
#include <vector>

namespace twogauge {

/// Nonnegative weights on the nodes of a set.
struct DiscreteMeasure {
  Eigen::VectorXd weights;

  double total() const { return weights.sum(); }
  /// Indices with positive weight, ascending.
  std::vector<Eigen::Index> support() const;
  static DiscreteMeasure point_mass(Eigen::Index n, Eigen::Index i);
  static DiscreteMeasure uniform(Eigen::Index n);
};

struct SolverOptions {
  double tol = 1e-8;
  long max_iter = 100000;
};

struct CapacityResult {
  double value = 0.0;   // 1 / energy
  double energy = 0.0;  // minimal energy E*
  DiscreteMeasure measure;
  Eigen::VectorXd potential;  // K w at the returned measure
  double kkt_residual = 0.0;
  double gap = 0.0;  // E - min_i potential_i
  long iterations = 0;
  bool converged = false;
  std::string gauge;
  std::string set_label;

  /// kkt_residual / energy
  double relative_residual() const { return energy > 0.0 ? kkt_residual / energy : kkt_residual; }
};

double energy(const KernelMatrix& K, const DiscreteMeasure& mu);
double potential(const KernelMatrix& K, const DiscreteMeasure& mu, Eigen::Index i);

/// max_i max(0, lambda - phi_i) + max over the support of |phi_i - lambda|.
double kkt_residual(const Eigen::VectorXd& w, const Eigen::VectorXd& phi, double lambda);

/// Minimizes w'Kw over the probability simplex. Conditional gradient with
/// away steps locates the support; an active-set pass on the bordered KKT
/// system then polishes it, adding violated nodes until the certificate holds.
CapacityResult equilibrium_measure(const KernelMatrix& K, const SolverOptions& opts = {});

CapacityResult capacity(const CompactSet& set, const Gauge& gauge, const SolverOptions& opts = {},
                        double theta = kDefaultTheta);

struct RegularPartition {
  std::vector<Eigen::Index> regular;
  std::vector<Eigen::Index> nonregular;
};

/// A node is regular when |phi_i - E*| <= tol * E*.
RegularPartition regular_points(const CapacityResult& result, double tol);
RegularPartition regular_points(const CompactSet& set, const Gauge& gauge, double tol,
                                const SolverOptions& opts = {});

nlohmann::json to_json(const CapacityResult& r);

}  // namespace twogauge
