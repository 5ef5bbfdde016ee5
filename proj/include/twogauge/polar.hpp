#pragma once

#include "twogauge/capacity.hpp"

#include <json.hpp>

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace twogauge {

struct PolarOptions {
  /// NLMC threshold on the smallest-radius Martin capacity.
  double threshold = 0.05;
  /// A node is regular for a ball when |Phi(xi) - E*| <= regular_tol * E*.
  double regular_tol = 1e-4;
  double kernel_theta = kDefaultTheta;
  SolverOptions solver;
  int workers = 1;
};

/// r_k = 2^-k diam(A) for k = 1..K, K the largest index with r_K > 2 resolution.
std::vector<double> default_radius_schedule(const CompactSet& set);

/// Martin capacity of the nodes y with 0 < |y - xi| < r for the kernel
/// gauge(|x - y|) / gauge(|xi - y|), xi the center of cell `xi`. The quadratic
/// form is symmetrized. Returns 0 when no node is left.
double local_martin_cap(const CompactSet& set, std::size_t xi, double r, const Gauge& gauge,
                        const PolarOptions& opts = {});

struct RadiusRecord {
  double radius = 0.0;
  long ball_nodes = 0;     // nodes with |y - xi| < r, xi included
  double martin_cap = 0.0;  // punctured ball
  double f_cap = 0.0;       // ball, xi included; 0 when xi is alone
  bool regular = false;
  /// Martin energy of the measure with density gauge(|xi - y|) / Phi(xi)
  /// against the ball's equilibrium measure; computed at regular balls.
  std::optional<double> certificate;
};

struct PointClassification {
  std::size_t node = 0;
  std::vector<RadiusRecord> radii;
  bool nlmc = false;
  bool strongly_regular = false;
  /// A solve failed; both labels are then false and `error` says why.
  bool indeterminate = false;
  std::string error;

  std::string nlmc_label() const;
  std::string regular_label() const;
};

/// Per-node labels in node order. The schedule must be decreasing with its
/// smallest radius above twice the resolution.
std::vector<PointClassification> classify(const CompactSet& set, const Gauge& gauge,
                                          const std::vector<double>& radii, const PolarOptions& opts = {});

/// Strongly regular nodes that are not NLMC (empty when the inclusion holds).
std::vector<std::size_t> inclusion_violations(const std::vector<PointClassification>& points);
/// Largest certificate over all regular (node, radius) pairs; 0 if none.
double max_certificate(const std::vector<PointClassification>& points);

struct Decomposition {
  CompactSet a1, a2;
  std::string gauge;
  double threshold = 0.0;
  std::vector<double> radii;
  double resolution = 0.0;
  /// Cap_log(A2); 0 for empty A2.
  double cap_log_a2 = 0.0;
  std::vector<PointClassification> points;
  std::vector<std::size_t> indeterminate;  // placed in A1
};

/// A2 = cells whose nodes are NLMC, A1 = the rest. An empty schedule means
/// default_radius_schedule.
Decomposition decompose(const CompactSet& set, const Gauge& gauge, std::vector<double> radii = {},
                        const PolarOptions& opts = {});

nlohmann::json to_json(const Decomposition& d);
/// Columns node,x,y,cap_r<k>...,nlmc,strongly_regular.
std::string classification_csv(const CompactSet& set, const std::vector<PointClassification>& points,
                               const std::vector<double>& radii);

}  // namespace twogauge
