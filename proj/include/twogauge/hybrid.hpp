#pragma once

#include "twogauge/capacity.hpp"

#include <json.hpp>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace twogauge {

/// Cap_eps: capacity under hybrid(f, g, eps). Throws UnderResolvedError when
/// the set resolution exceeds eps / 4.
CapacityResult cap_eps(const CompactSet& set, double eps, const Gauge& f, const Gauge& g,
                       const SolverOptions& opts = {}, double theta = kDefaultTheta);

/// Builds the set at a requested resolution (maximum cell diameter).
using SetBuilder = std::function<CompactSet(double resolution)>;

/// Disk whose cells have diameter at most the requested resolution.
SetBuilder disk_builder(const Point& center, double radius);

/// Cantor stage whose interval length is closest (in log scale) to
/// resolution / rho, scaled by `scale` about the origin and cut into pieces of
/// at most the requested resolution.
SetBuilder cantor_builder(double alpha, double rho, double scale);

/// Depth n with 2^(-2^(alpha n)) closest to eps in log scale.
int cantor_depth_for(double alpha, double eps);

struct HybridPoint {
  double eps = 0.0;
  double resolution = 0.0;
  double value = 0.0;
  double energy = 0.0;
  double kkt_residual = 0.0;
  bool converged = false;
  long nodes = 0;
  double seconds = 0.0;
};

struct HybridResult {
  std::string set_label;
  std::string f, g;
  double coupling = 0.0;
  std::vector<double> eps_schedule;
  std::vector<double> resolution_schedule;
  std::vector<HybridPoint> cap_values;
  /// Last value of the sequence; never extrapolated.
  double limit_estimate = 0.0;
  bool monotone_ok = true;
  /// Aitken delta-squared estimate from the last three values, reported apart.
  std::optional<double> aitken_estimate;
  /// Cap_f of the finest set: upper end of the uncertainty band.
  double cap_f = 0.0;
};

/// Relative slack for the monotonicity flag.
inline constexpr double kMonotoneSlack = 1e-6;

/// Cap_eps along a strictly decreasing schedule, the set being rebuilt at
/// resolution rho * eps for each term.
HybridResult cap_hybrid(const SetBuilder& build, const std::vector<double>& eps_schedule, double rho,
                        const Gauge& f, const Gauge& g, const SolverOptions& opts = {},
                        double theta = kDefaultTheta);

/// eps_k = 2^-k for k = first..last.
std::vector<double> dyadic_schedule(int first, int last);

/// True when every term is at least (1 - slack) times its predecessor.
bool nondecreasing(const std::vector<double>& values, double slack = kMonotoneSlack);

nlohmann::json to_json(const HybridResult& r);
/// Columns eps,resolution,cap_eps,kkt_residual.
std::string to_csv(const HybridResult& r);

struct ConstrainedResult {
  double value = 0.0;     // 1 / E_f at the returned measure
  double f_energy = 0.0;
  double g_energy = 0.0;
  double multiplier = 0.0;  // weight on E_g in the Lagrangian
  DiscreteMeasure measure;
};

/// Minimizes E_f over probability measures with E_g <= gamma and returns the
/// reciprocal of the minimum. gamma = infinity leaves the problem unconstrained.
/// Throws PreconditionError when gamma does not exceed the minimal g-energy.
ConstrainedResult cap_constrained_solve(const CompactSet& set, const Gauge& f, const Gauge& g, double gamma,
                                        const SolverOptions& opts = {}, double theta = kDefaultTheta);

double cap_constrained(const CompactSet& set, const Gauge& f, const Gauge& g, double gamma,
                       const SolverOptions& opts = {}, double theta = kDefaultTheta);

}  // namespace twogauge
