#include "acceptance.hpp"

#include "commands.hpp"

#include "twogauge/brownian.hpp"
#include "twogauge/capacity.hpp"
#include "twogauge/error.hpp"
#include "twogauge/hybrid.hpp"
#include "twogauge/montecarlo.hpp"
#include "twogauge/polar.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

namespace twogauge::app {

namespace {

// Tolerances and limits.
constexpr double kDiskTarget = 0.5;
constexpr double kDiskRelTol = 0.05;
constexpr double kKktRelTol = 1e-6;
constexpr int kOracleSets = 50;
constexpr int kOracleMesh = 60;
constexpr double kOracleTol = 1e-3;
constexpr double kCantorFinalFraction = 0.2;
constexpr double kDichotomyFactor = 3.0;
constexpr double kLogFloor = 0.25;
constexpr double kHitRelTol = 0.05;
constexpr double kExitRelTol = 0.03;
constexpr long kCalibrationPaths = 100000;
constexpr long kBandTrials = 20000;
constexpr double kCertificateSlack = 1e-3;
constexpr double kDecompositionShare = 0.95;
constexpr double kCompositeResolution = 0.0075;
constexpr double kDoublePointEps = 1.0 / 16;

struct Spec {
  int id;
  const char* title;
  double limit;
};

constexpr Spec kSpecs[] = {
    {1, "disk capacity anchor", 60},
    {2, "QP oracle equivalence", 60},
    {3, "hybrid capacity monotone limit", 600},
    {4, "Cantor dichotomy", 300},
    {5, "simulator calibration", 300},
    {6, "single and two-ball hitting bands", 1200},
    {7, "double-point sandwich band", 1800},
    {8, "intersection and scaling bands", 1800},
    {9, "second-moment bound", 300},
    {10, "strong regularity inside NLMC", 600},
    {11, "decomposition of disk and Cantor set", 1200},
    {12, "determinism across worker counts", 0},
};

const Spec& spec_of(int id) {
  for (const auto& s : kSpecs)
    if (s.id == id) return s;
  throw PreconditionError("unknown criterion " + std::to_string(id));
}

std::string num(double v, int precision = 6) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

nlohmann::json series(const std::vector<double>& v) { return nlohmann::json(v); }

// --- 1 ---------------------------------------------------------------------

void disk_anchor(CriterionResult& out) {
  const double r = std::exp(-2.0);
  std::vector<double> caps, kkt;
  for (int m : {64, 128, 256}) {
    const auto c = capacity(disk_builder(Point::Zero(), r)(r / m), Gauge::log());
    caps.push_back(c.value);
    kkt.push_back(c.relative_residual());
  }
  const double d1 = caps[1] - caps[0], d2 = caps[2] - caps[1];
  double p = 1.0;
  bool observed = false;
  if (d1 != 0.0 && d2 != 0.0 && d1 / d2 > 1.0) {
    p = std::log2(d1 / d2);
    observed = true;
  }
  const double extrapolated = caps[2] + d2 / (std::exp2(p) - 1.0);
  const double err = std::abs(extrapolated - kDiskTarget) / kDiskTarget;
  const double worst_kkt = *std::max_element(kkt.begin(), kkt.end());
  out.pass = err <= kDiskRelTol && worst_kkt <= kKktRelTol;
  out.detail = "Richardson " + num(extrapolated, 8) + " (order " + num(p, 3) + (observed ? "" : ", fallback") +
               "), rel err " + num(err, 3) + " <= " + num(kDiskRelTol) + ", max KKT " + num(worst_kkt, 3) +
               " <= " + num(kKktRelTol);
  out.data = {{"capacities", series(caps)}, {"kkt_relative", series(kkt)}, {"order", p},
              {"extrapolated", extrapolated}, {"relative_error", err}};
}

// --- 2 ---------------------------------------------------------------------

// Minimum of u'Ku / m^2 over integer u >= 0 with sum m. The energy and K u are
// updated incrementally; the last two coordinates are closed in one loop.
class SimplexGrid {
 public:
  SimplexGrid(const Eigen::MatrixXd& K, int m) : K_(K), m_(m), g_(Eigen::VectorXd::Zero(K.rows())) {}

  double minimum() {
    const auto n = K_.rows();
    if (n == 1) return K_(0, 0);
    best_ = std::numeric_limits<double>::infinity();
    descend(0, m_, 0.0);
    return best_ / (static_cast<double>(m_) * m_);
  }

 private:
  void descend(Eigen::Index i, int rem, double E) {
    const auto n = K_.rows();
    if (i == n - 2) {
      const double kii = K_(i, i), kil = K_(i, n - 1), kll = K_(n - 1, n - 1);
      const double gi = g_[i], gl = g_[n - 1];
      for (int a = 0; a <= rem; ++a) {
        const double b = rem - a;
        const double e = E + a * (2.0 * gi + a * kii) + b * (2.0 * (gl + a * kil) + b * kll);
        best_ = std::min(best_, e);
      }
      return;
    }
    const auto col = K_.col(i);
    double e = E;
    for (int a = 0; a <= rem; ++a) {
      descend(i + 1, rem - a, e);
      // step from a to a + 1 units on coordinate i
      e += 2.0 * g_[i] + K_(i, i);
      g_ += col;
    }
    g_ -= static_cast<double>(rem + 1) * col;
  }

  const Eigen::MatrixXd& K_;
  int m_;
  Eigen::VectorXd g_;
  double best_ = 0.0;
};

CompactSet random_cells(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> side(0.01, 0.04), radius(0.0, 0.3), angle(0.0, 2 * std::numbers::pi);
  std::vector<Cell> cells;
  while (static_cast<int>(cells.size()) < n) {
    const double rr = radius(rng), t = angle(rng), h = 0.5 * side(rng);
    Cell c{Point(rr * std::cos(t), rr * std::sin(t)), Eigen::Vector2d(h, h)};
    bool clear = true;
    for (const auto& o : cells)
      if (c.box(0.005).intersects(o.box())) clear = false;
    if (clear) cells.push_back(c);
  }
  return CompactSet(std::move(cells), "random(" + std::to_string(n) + ")");
}

void qp_oracle(CriterionResult& out) {
  std::mt19937_64 rng(20240607);
  std::uniform_int_distribution<int> size(2, 8);
  const Gauge gauges[] = {Gauge::log(), Gauge::log_squared(), Gauge::power(0.5)};
  double worst = 0.0;
  int worst_set = -1, failures = 0, below = 0;
  nlohmann::json rows = nlohmann::json::array();
  for (int k = 0; k < kOracleSets; ++k) {
    const auto set = random_cells(rng, size(rng));
    const Gauge& gauge = gauges[k % 3];
    const auto K = kernel_matrix(set, gauge);
    const auto res = equilibrium_measure(K);
    const double grid = SimplexGrid(K.to_dense(), kOracleMesh).minimum();
    const double diff = std::abs(res.energy - grid);
    // every grid point is a feasible measure, so a correct solver never exceeds the grid minimum
    below += res.energy <= grid + 1e-12;
    if (diff > kOracleTol || !res.converged) ++failures;
    if (diff > worst) {
      worst = diff;
      worst_set = k;
    }
    rows.push_back({{"nodes", set.size()}, {"gauge", gauge.descriptor()}, {"solver", res.energy}, {"grid", grid}});
  }
  out.pass = failures == 0 && below == kOracleSets;
  out.detail = std::to_string(kOracleSets - failures) + "/" + std::to_string(kOracleSets) +
               " sets within " + num(kOracleTol) + " of the mesh-1/" + std::to_string(kOracleMesh) +
               " grid; largest gap " + num(worst, 3) + " (set " + std::to_string(worst_set) + "); solver <= grid on " +
               std::to_string(below) + "/" + std::to_string(kOracleSets);
  out.data = {{"sets", rows}, {"max_gap", worst}, {"solver_below_grid", below}};
}

// --- 3 ---------------------------------------------------------------------

void hybrid_limit(CriterionResult& out) {
  const auto schedule = dyadic_schedule(2, 9);
  constexpr double rho = 0.25;
  const auto disk = cap_hybrid(disk_builder(Point::Zero(), std::exp(-2.0)), schedule, rho, Gauge::log(),
                               Gauge::log_squared());
  const auto cantor = cap_hybrid(cantor_builder(0.75, rho, 0.6), schedule, rho, Gauge::log(), Gauge::log_squared());
  auto values = [](const HybridResult& r) {
    std::vector<double> v;
    for (const auto& p : r.cap_values) v.push_back(p.value);
    return v;
  };
  const auto dv = values(disk), cv = values(cantor);
  const bool disk_monotone = nondecreasing(dv);
  const double plateau_err = std::abs(dv.back() - kDiskTarget) / kDiskTarget;
  const bool cantor_monotone = nondecreasing(cv);
  bool cantor_decreasing = true;
  for (std::size_t k = 1; k < cv.size(); ++k) cantor_decreasing = cantor_decreasing && cv[k] < cv[k - 1];
  const bool cantor_small = cv.back() <= kCantorFinalFraction * cv.front();
  out.pass = disk_monotone && plateau_err <= kDiskRelTol && cantor_monotone && cantor_decreasing && cantor_small;
  out.detail = std::string("disk monotone ") + (disk_monotone ? "yes" : "no") + ", plateau " + num(dv.back()) +
               " (rel err " + num(plateau_err, 3) + "); Cantor " + num(cv.front(), 4) + " -> " + num(cv.back(), 4) +
               ", nondecreasing " + (cantor_monotone ? "yes" : "no") + ", decreasing " +
               (cantor_decreasing ? "yes" : "no") + ", final/initial " + num(cv.back() / cv.front(), 3) +
               " <= " + num(kCantorFinalFraction);
  out.data = {{"disk", to_json(disk)}, {"cantor", to_json(cantor)}};
}

// --- 4 ---------------------------------------------------------------------

void cantor_dichotomy(CriterionResult& out) {
  constexpr double alpha = 0.75;
  constexpr int pieces = 64;
  std::vector<double> log_caps, log2_caps;
  for (int n = 0; n <= 5; ++n) {
    const auto set = subdivide(make_cantor(alpha, n), cantor_interval_length(alpha, n) / pieces);
    log_caps.push_back(capacity(set, Gauge::log()).value);
    log2_caps.push_back(capacity(set, Gauge::log_squared()).value);
  }
  const double floor = *std::min_element(log_caps.begin(), log_caps.end());
  bool decreasing = true;
  for (std::size_t k = 1; k < log2_caps.size(); ++k) decreasing = decreasing && log2_caps[k] < log2_caps[k - 1];
  const double factor = log2_caps.front() / log2_caps.back();
  out.pass = floor >= kLogFloor && decreasing && factor >= kDichotomyFactor;
  out.detail = "Cap_log floor " + num(floor, 4) + " >= " + num(kLogFloor) + "; Cap_log2 " + num(log2_caps.front(), 4) +
               " -> " + num(log2_caps.back(), 4) + ", decreasing " + (decreasing ? "yes" : "no") + ", factor " +
               num(factor, 3) + " >= " + num(kDichotomyFactor);
  out.data = {{"cap_log", series(log_caps)}, {"cap_log2", series(log2_caps)}, {"floor", floor},
              {"factor", factor}, {"cells_per_interval", pieces}};
}

// --- 5 ---------------------------------------------------------------------

void calibration(CriterionResult& out, int workers) {
  const Point start(1.0, 0.0);
  bool ok = true;
  nlohmann::json rows = nlohmann::json::array();
  std::string detail;
  for (int k : {5, 6, 7}) {
    const double delta = std::ldexp(1.0, -k);
    const BallTargets target({Point::Zero()}, delta);
    WalkOptions o;
    o.dt = delta * delta / 16;
    const auto est = estimate_prob(
        [&](Rng& rng, std::uint64_t) {
          return walk(start, o, &target, rng, [](double, const Point&, auto) { return true; }).stopped;
        },
        kCalibrationPaths, derive_seed(5, "hit/" + std::to_string(k)), workers);
    const double ref = std::log(3.0) / std::log(3.0 / delta);
    const double rel = std::abs(est.p_hat / ref - 1.0);
    ok = ok && rel <= kHitRelTol;
    rows.push_back({{"delta", delta}, {"estimate", to_json(est)}, {"reference", ref}, {"relative_error", rel}});
    detail += "P(hit 2^-" + std::to_string(k) + ") rel err " + num(rel, 3) + "; ";
  }
  WalkOptions o;
  o.dt = std::ldexp(1.0, -14) / 16;
  const auto seed = derive_seed(5, "exit");
  std::vector<double> times(kCalibrationPaths);
  for (long i = 0; i < kCalibrationPaths; ++i) {
    Rng rng = make_rng(seed, static_cast<std::uint64_t>(i));
    times[static_cast<std::size_t>(i)] = walk(start, o, nullptr, rng).exit_time;
  }
  double mean = 0.0;
  for (double t : times) mean += t;
  mean /= static_cast<double>(times.size());
  const double exit_rel = std::abs(mean / 4.0 - 1.0);
  ok = ok && exit_rel <= kExitRelTol;
  out.pass = ok;
  out.detail = detail + "mean exit time " + num(mean, 5) + " (rel err " + num(exit_rel, 3) + " <= " +
               num(kExitRelTol) + "); hit tol " + num(kHitRelTol);
  out.data = {{"hitting", rows}, {"mean_exit_time", mean}, {"paths", kCalibrationPaths}};
}

// --- 6, 7, 8 ---------------------------------------------------------------

std::string band_text(const Report& r) {
  std::string s;
  for (const auto& b : r.bands) {
    if (!s.empty()) s += ", ";
    s += r.experiment + "/" + b.group + " width " + num(b.width, 3) + " <= " + num(b.limit);
  }
  return s;
}

McOptions band_mc(int workers, std::uint64_t seed) {
  McOptions mc;
  mc.trials = kBandTrials;
  mc.seed = seed;
  mc.workers = workers;
  return mc;
}

void reports(CriterionResult& out, const std::vector<Report>& reps) {
  out.pass = true;
  out.data = nlohmann::json::array();
  for (const auto& r : reps) {
    out.pass = out.pass && r.verdict;
    if (!out.detail.empty()) out.detail += "; ";
    out.detail += band_text(r);
    out.data.push_back(to_json(r));
  }
  out.detail += "; " + std::to_string(kBandTrials) + " trials per condition";
}

void lemma31_bands(CriterionResult& out, int workers) { reports(out, {run_lemma31({}, band_mc(workers, 6))}); }

void thm22_band(CriterionResult& out, int workers) {
  reports(out, {run_thm22(standard_family(1.0 / 64), kDoublePointEps, band_mc(workers, 7))});
}

void prop_bands(CriterionResult& out, int workers) {
  const auto mc = band_mc(workers, 8);
  std::vector<Prop32Case> p32;
  std::vector<Cor34Case> c34;
  for (int k : {3, 4, 5}) {
    const double eps = std::ldexp(1.0, -k);
    p32.push_back({prop32_disk(eps), eps});
    c34.push_back({cor34_disk(eps), eps});
  }
  reports(out, {run_prop32(p32, mc), run_prop33(standard_family(1.0 / 64), mc), run_cor34(c34, mc)});
}

// --- 9 ---------------------------------------------------------------------

void second_moment(CriterionResult& out, int workers) {
  const auto rep = run_second_moment(second_moment_cases(kDoublePointEps), kDoublePointEps, band_mc(workers, 9));
  out.pass = rep.verdict;
  for (const auto& c : rep.extra["cases"]) {
    if (!out.detail.empty()) out.detail += "; ";
    out.detail += c["set"].get<std::string>() + " bound " + num(c["bound"].get<double>(), 4) + " +- " +
                  num(c["bound_ci_half"].get<double>(), 2) + " vs P " + num(c["direct"]["p_hat"].get<double>(), 4) +
                  " (CI high " + num(c["direct"]["ci_high"].get<double>(), 4) + ")";
    if (c.contains("equal_within_ci")) out.detail += c["equal_within_ci"].get<bool>() ? " equal" : " NOT equal";
  }
  out.data = to_json(rep);
}

// --- 10, 11 ----------------------------------------------------------------

struct ClassifiedSet {
  CompactSet set;
  std::vector<double> radii;
};

void inclusion(CriterionResult& out, int workers) {
  std::vector<ClassifiedSet> sets;
  {
    auto disk = disk_builder(Point::Zero(), 0.1)(0.02);
    disk.set_label("disk(r=0.1,res=0.02)");
    disk.mark_target();
    sets.push_back({std::move(disk), {}});
  }
  {
    auto cantor = transformed(make_cantor(0.75, 4), 0.5, Point::Zero());
    cantor.set_label("cantor(alpha=0.75,n=4,scale=0.5)");
    cantor.mark_target();
    sets.push_back({std::move(cantor), {}});
  }
  sets.push_back({composite_set(kCompositeResolution), {}});
  PolarOptions po;
  po.workers = workers;
  out.pass = true;
  out.data = nlohmann::json::array();
  for (auto& s : sets) {
    const auto radii = default_radius_schedule(s.set);
    const auto points = classify(s.set, Gauge::log_squared(), radii, po);
    const auto bad = inclusion_violations(points);
    const double cert = max_certificate(points);
    long nlmc = 0, regular = 0, indeterminate = 0;
    for (const auto& p : points) {
      nlmc += p.nlmc;
      regular += p.strongly_regular;
      indeterminate += p.indeterminate;
    }
    const bool ok = bad.empty() && cert <= 1.0 + kCertificateSlack && indeterminate == 0;
    out.pass = out.pass && ok;
    if (!out.detail.empty()) out.detail += "; ";
    out.detail += s.set.label() + ": " + std::to_string(regular) + " strongly regular, " + std::to_string(nlmc) +
                  " NLMC of " + std::to_string(points.size()) + ", violations " + std::to_string(bad.size()) +
                  ", max certificate " + num(cert, 8) + " <= " + num(1.0 + kCertificateSlack);
    out.data.push_back({{"set", s.set.label()}, {"nodes", points.size()}, {"strongly_regular", regular},
                        {"nlmc", nlmc}, {"violations", bad}, {"max_certificate", cert},
                        {"indeterminate", indeterminate}, {"radii", radii}});
  }
}

void decomposition(CriterionResult& out, int workers) {
  const auto set = composite_set(kCompositeResolution);
  PolarOptions po;
  po.workers = workers;
  const auto d = decompose(set, Gauge::log_squared(), {}, po);
  // disk cells are squares, Cantor cells are segments
  long disk_total = 0, disk_in_a2 = 0, cantor_total = 0, cantor_in_a1 = 0;
  for (const auto& p : d.points) {
    const bool segment = set[p.node].degenerate();
    (segment ? cantor_total : disk_total) += 1;
    if (segment && !p.nlmc) ++cantor_in_a1;
    if (!segment && p.nlmc) ++disk_in_a2;
  }
  const double disk_share = static_cast<double>(disk_in_a2) / static_cast<double>(disk_total);
  const double cantor_share = static_cast<double>(cantor_in_a1) / static_cast<double>(cantor_total);

  const auto mc = band_mc(workers, 11);
  const auto pa = estimate_eps_double({set, kCompositeResolution}, kDoublePointEps, mc, "A");
  const auto pa2 = estimate_eps_double({d.a2, kCompositeResolution}, kDoublePointEps, mc, "A2");
  const bool overlap = pa.ci_low <= pa2.ci_high && pa2.ci_low <= pa.ci_high;
  out.pass = disk_share >= kDecompositionShare && cantor_share >= kDecompositionShare && overlap;
  out.detail = "disk cells in A2 " + std::to_string(disk_in_a2) + "/" + std::to_string(disk_total) +
               ", Cantor cells in A1 " + std::to_string(cantor_in_a1) + "/" + std::to_string(cantor_total) +
               " (>= " + num(kDecompositionShare) + "); P(A) " + num(pa.p_hat, 4) + " [" + num(pa.ci_low, 4) + ", " +
               num(pa.ci_high, 4) + "] vs P(A2) " + num(pa2.p_hat, 4) + " [" + num(pa2.ci_low, 4) + ", " +
               num(pa2.ci_high, 4) + "], CIs overlap " + (overlap ? "yes" : "no");
  out.data = {{"decomposition", to_json(d)}, {"p_a", to_json(pa)}, {"p_a2", to_json(pa2)},
              {"disk_share", disk_share}, {"cantor_share", cantor_share}};
}

// --- 12 --------------------------------------------------------------------

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot read " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void determinism(CriterionResult& out, const std::string& scratch) {
  std::vector<std::string> dirs;
  for (int workers : {1, 2}) {
    RunConfig cfg;
    cfg.command = "experiment";
    cfg.experiment = "thm22";
    cfg.seed = 42;
    cfg.workers = workers;
    cfg.out = scratch + "/workers" + std::to_string(workers);
    std::ostringstream log;
    dirs.push_back(run_command(cfg, log).dir);
  }
  bool same = true;
  for (const char* ext : {".json", ".csv"}) {
    const std::string name = std::string("thm22_42") + ext;
    same = same && slurp(std::filesystem::path(dirs[0]) / name) == slurp(std::filesystem::path(dirs[1]) / name);
  }
  out.pass = same;
  out.detail = std::string("thm22 seed 42 with 1 and 2 workers: JSON and CSV ") +
               (same ? "byte-identical" : "differ");
  out.data = {{"runs", dirs}};
}

}  // namespace

const std::vector<int>& criterion_ids() {
  static const std::vector<int> ids = [] {
    std::vector<int> v;
    for (const auto& s : kSpecs) v.push_back(s.id);
    return v;
  }();
  return ids;
}

std::string criterion_title(int id) { return spec_of(id).title; }

CriterionResult run_criterion(int id, const AcceptanceOptions& opts) {
  const Spec& spec = spec_of(id);
  CriterionResult out;
  out.id = id;
  out.title = spec.title;
  out.limit_seconds = spec.limit;
  const int workers = std::max(1, opts.workers);
  const auto t0 = std::chrono::steady_clock::now();
  try {
    switch (id) {
      case 1: disk_anchor(out); break;
      case 2: qp_oracle(out); break;
      case 3: hybrid_limit(out); break;
      case 4: cantor_dichotomy(out); break;
      case 5: calibration(out, workers); break;
      case 6: lemma31_bands(out, workers); break;
      case 7: thm22_band(out, workers); break;
      case 8: prop_bands(out, workers); break;
      case 9: second_moment(out, workers); break;
      case 10: inclusion(out, workers); break;
      case 11: decomposition(out, workers); break;
      case 12: determinism(out, opts.scratch); break;
    }
  } catch (const std::exception& e) {
    out.pass = false;
    out.detail = std::string("error: ") + e.what();
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (out.limit_seconds > 0.0 && out.seconds > out.limit_seconds) {
    out.pass = false;
    out.detail += "; over the time limit";
  }
  return out;
}

std::string format_line(const CriterionResult& r) {
  std::ostringstream s;
  s << "criterion " << r.id << ' ' << (r.pass ? "PASS" : "FAIL") << ' ' << r.title << ": " << r.detail << " ["
    << num(r.seconds, 3) << "s";
  if (r.limit_seconds > 0.0) s << " / " << r.limit_seconds << "s";
  s << ']';
  return s.str();
}

nlohmann::json to_json(const CriterionResult& r) {
  return {{"criterion", r.id},       {"title", r.title},   {"pass", r.pass}, {"seconds", r.seconds},
          {"limit_seconds", r.limit_seconds}, {"detail", r.detail}, {"data", r.data}};
}

}  // namespace twogauge::app
