#pragma once

#include "twogauge/brownian.hpp"
#include "twogauge/capacity.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace twogauge {

/// Binomial proportion with its 95% Wilson interval.
struct Estimate {
  long successes = 0;
  long trials = 0;
  double p_hat = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::uint64_t seed = 0;
  double dt = 0.0;
  double eta = 0.0;

  double ci_width() const { return ci_high - ci_low; }
};

Estimate wilson(long successes, long trials);

/// One replicate: decides the event with a generator owned by the replicate.
using Event = std::function<bool(Rng& rng, std::uint64_t replicate)>;

/// Runs `trials` replicates, replicate i drawing from make_rng(seed, i), over
/// `workers` threads. Counts are summed, so the result does not depend on the
/// number of workers.
Estimate estimate_prob(const Event& event, long trials, std::uint64_t seed, int workers = 1);

/// Stable seed for a named condition of an experiment.
std::uint64_t derive_seed(std::uint64_t seed, const std::string& tag);

struct ReportRow {
  std::string group;
  std::string condition;
  Estimate estimate;
  /// Second estimate entering the reference (e.g. the intersection
  /// probability in a double-point-to-intersection ratio), when there is one.
  std::optional<Estimate> reference_estimate;
  double reference = 0.0;
  bool defined = true;  // false when the reference vanishes
  double ratio = 0.0;
  double ratio_low = 0.0;
  double ratio_high = 0.0;
  /// Same condition at dt / 2, with fewer trials.
  std::optional<Estimate> half_dt;
};

struct Band {
  std::string group;
  double min_ratio = 0.0;
  double max_ratio = 0.0;
  double width = 0.0;  // max / min
  double limit = 0.0;
  bool pass = false;
};

struct Report {
  std::string experiment;
  std::uint64_t seed = 0;
  nlohmann::json parameters;
  std::vector<ReportRow> rows;
  std::vector<Band> bands;
  bool verdict = false;
  double runtime = 0.0;  // seconds; kept out of the canonical JSON
  nlohmann::json extra;  // experiment-specific values
};

/// Ratio from an estimate and a fixed reference; CI bounds scale alike.
ReportRow ratio_row(std::string group, std::string condition, const Estimate& est, double reference);
/// Ratio est / (scale * ref_est), with the interval from the extreme CI bounds.
ReportRow ratio_row(std::string group, std::string condition, const Estimate& est, const Estimate& ref_est,
                    double scale);

/// Band per group (over defined rows) and the overall verdict.
void finalize(Report& report, const std::vector<std::pair<std::string, double>>& limits);

nlohmann::json to_json(const Estimate& e);
/// Canonical report document; runtime is excluded so that reruns compare equal.
nlohmann::json to_json(const Report& r);
/// Columns group,condition,p_hat,ci_low,ci_high,reference,ratio.
std::string to_csv(const Report& r);
/// Writes <dir>/<experiment>_<seed>.json and .csv, plus a timing sidecar.
void write_report(const Report& r, const std::string& dir);

struct McOptions {
  long trials = 20000;
  std::uint64_t seed = 1;
  int workers = 1;
  /// Multiplies the default step dt.
  double dt_scale = 1.0;
  /// Trials of the dt / 2 companion rows as a fraction of `trials` (0 disables).
  double half_dt_fraction = 0.0;
  Point start = Point(1.0, 0.0);
};

// ---------------------------------------------------------------------------

struct Lemma31Config {
  double eps = 1.0 / 16;
  std::vector<double> deltas{1.0 / 64, 1.0 / 128, 1.0 / 256};
  Point x = Point::Zero();
  /// Start point for the P_xi rows.
  Point xi = Point(0.25, 0.0);
  /// Partners y = x + factor * eps * (1, 0) for the two-ball rows: one at
  /// distance >= eps, one closer.
  double far_factor = 2.0;
  double near_factor = 0.875;
  double band_single = 3.0;
  double band_pair = 4.0;
};

Report run_lemma31(const Lemma31Config& cfg, const McOptions& mc);

/// Set paired with the dilation used for its segment cells.
struct NamedSet {
  CompactSet set;
  double segment_eta = 0.0;
};

/// Disks of radius 0.05, 0.1, 0.2, Cantor stages 2 and 3 (alpha 0.75, scaled
/// by 0.6) and a segment of length 1/2, all centered at the origin and built
/// at resolution `resolution`.
std::vector<NamedSet> standard_family(double resolution);

Report run_thm22(const std::vector<NamedSet>& family, double eps, const McOptions& mc, double band = 50.0);

/// Double points against |log eps| times two-path intersections, per (set, eps).
struct Prop32Case {
  NamedSet set;
  double eps;
};
Report run_prop32(const std::vector<Prop32Case>& cases, const McOptions& mc, double band = 4.0);
/// Disk of radius eps/4 at the origin with cells of side eps/16.
NamedSet prop32_disk(double eps);

Report run_prop33(const std::vector<NamedSet>& family, const McOptions& mc, double band = 4.0);

struct Cor34Case {
  NamedSet set;
  double eps;
};
Report run_cor34(const std::vector<Cor34Case>& cases, const McOptions& mc, double band = 4.0);
/// Disk of radius eps/8 at the origin with cells of side eps/32.
NamedSet cor34_disk(double eps);

struct SecondMoment {
  double bound = 0.0;  // (EX)^2 / EX^2
  double ex = 0.0;
  double ex2 = 0.0;
  /// 95% half-width of the bound (delta method).
  double bound_ci_half = 0.0;
  Estimate direct;  // P(eps_double in the set) on the same paths
  Estimate positive;  // P(X > 0) on the same paths
};

/// Second-moment lower bound for X = sum_S (log^2 delta / |log eps|) mu(S) 1_H(S).
SecondMoment second_moment_bound(const NamedSet& set, const DiscreteMeasure& mu, double eps, double delta,
                                 const McOptions& mc);

struct SecondMomentCase {
  NamedSet set;
  DiscreteMeasure mu;
  std::string measure_label;
  double delta = 0.0;
  /// The bound must then match P(eps_double) within the combined intervals.
  bool expect_equality = false;
};

/// A single square cell with a point mass, the scaled Cantor stage 2 and a
/// disk of radius 0.1 (both at resolution 1/64) with their Cap_eps
/// equilibrium measures.
std::vector<SecondMomentCase> second_moment_cases(double eps);

/// Rows compare P(eps_double) with the bound (ratio P / bound). A case passes
/// when the bound does not exceed the upper CI end of P plus the bound's own
/// half-width.
Report run_second_moment(const std::vector<SecondMomentCase>& cases, double eps, const McOptions& mc);

/// P(eps_double in the set) with the default step and dilations.
Estimate estimate_eps_double(const NamedSet& set, double eps, const McOptions& mc, const std::string& tag);

}  // namespace twogauge
