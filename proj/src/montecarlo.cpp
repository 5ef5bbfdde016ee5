#include "twogauge/montecarlo.hpp"

#include "twogauge/error.hpp"
#include "twogauge/hybrid.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

namespace twogauge {

namespace {

constexpr double kZ95 = 1.959963984540054;

template <class T, class F>
std::vector<T> per_replicate(long trials, int workers, F&& fn) {
  std::vector<T> out(static_cast<std::size_t>(trials));
  workers = std::max(1, std::min<int>(workers, static_cast<int>(std::max(1L, trials))));
  if (workers == 1) {
    for (long i = 0; i < trials; ++i) out[static_cast<std::size_t>(i)] = fn(static_cast<std::uint64_t>(i));
    return out;
  }
  std::exception_ptr error;
  std::mutex error_lock;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      try {
        for (long i = w; i < trials; i += workers) out[static_cast<std::size_t>(i)] = fn(static_cast<std::uint64_t>(i));
      } catch (...) {
        std::lock_guard<std::mutex> g(error_lock);
        if (!error) error = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
  return out;
}

// Counts of each bit of per-replicate masks.
std::vector<long> count_bits(const std::vector<std::uint32_t>& masks, int bits) {
  std::vector<long> c(static_cast<std::size_t>(bits), 0);
  for (auto m : masks)
    for (int b = 0; b < bits; ++b)
      if (m & (1u << b)) ++c[static_cast<std::size_t>(b)];
  return c;
}

Estimate make_estimate(long successes, long trials, std::uint64_t seed, double dt, double eta) {
  Estimate e = wilson(successes, trials);
  e.seed = seed;
  e.dt = dt;
  e.eta = eta;
  return e;
}

double typical_eta(const CellTargets& t) {
  double e = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) e = std::max(e, t.eta(i));
  return e;
}

bool eps_double_walk(const Point& start, const WalkOptions& opts, const TargetRegion& targets, double eps, Rng& rng) {
  EpsDoubleTracker tracker(targets.size(), eps);
  walk(start, opts, &targets, rng,
       [&](double t, const Point&, std::span<const std::int32_t> cells) { return tracker.visit(t, cells); });
  return tracker.fired();
}

// Two independent paths meeting in a common cell. Path a is run to its exit;
// path b stops at its first visit to a cell that a visited.
bool intersection_walk(const Point& start, const WalkOptions& opts, const TargetRegion& targets, Rng& a, Rng& b,
                       bool* a_double = nullptr, double eps = 0.0) {
  std::vector<char> seen(targets.size(), 0);
  bool any = false;
  std::optional<EpsDoubleTracker> tracker;
  if (a_double) tracker.emplace(targets.size(), eps);
  walk(start, opts, &targets, a, [&](double t, const Point&, std::span<const std::int32_t> cells) {
    for (auto c : cells) seen[static_cast<std::size_t>(c)] = 1;
    any = true;
    if (tracker) tracker->visit(t, cells);
    return false;
  });
  if (a_double) *a_double = tracker->fired();
  if (!any) return false;
  const auto s = walk(start, opts, &targets, b, [&](double, const Point&, std::span<const std::int32_t> cells) {
    for (auto c : cells)
      if (seen[static_cast<std::size_t>(c)]) return true;
    return false;
  });
  return s.stopped;
}

std::string fmt(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

std::string pow2_label(double v) {
  const double l = std::log2(v);
  if (std::abs(l - std::round(l)) < 1e-12) return "2^" + std::to_string(static_cast<long>(std::round(l)));
  return fmt(v);
}

WalkOptions options_for(double dt, const McOptions& mc, double exit_radius = kExitRadius) {
  WalkOptions o;
  o.dt = dt * mc.dt_scale;
  o.exit_radius = exit_radius;
  return o;
}

long half_trials(const McOptions& mc) {
  return mc.half_dt_fraction > 0.0
             ? std::max(100L, static_cast<long>(std::llround(mc.half_dt_fraction * static_cast<double>(mc.trials))))
             : 0;
}

nlohmann::json base_parameters(const McOptions& mc) {
  return {{"trials", mc.trials},
          {"seed", mc.seed},
          {"dt_scale", mc.dt_scale},
          {"half_dt_fraction", mc.half_dt_fraction},
          {"start", {mc.start.x(), mc.start.y()}}};
}

double elapsed(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

Estimate wilson(long successes, long trials) {
  TWOGAUGE_REQUIRE(trials > 0 && successes >= 0 && successes <= trials, "wilson: invalid counts");
  Estimate e;
  e.successes = successes;
  e.trials = trials;
  const double n = static_cast<double>(trials);
  const double p = static_cast<double>(successes) / n;
  const double z2 = kZ95 * kZ95;
  const double denom = 1.0 + z2 / n;
  const double center = (p + z2 / (2 * n)) / denom;
  const double half = kZ95 * std::sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / denom;
  e.p_hat = p;
  e.ci_low = successes == 0 ? 0.0 : std::clamp(center - half, 0.0, p);
  e.ci_high = successes == trials ? 1.0 : std::clamp(center + half, p, 1.0);
  return e;
}

Estimate estimate_prob(const Event& event, long trials, std::uint64_t seed, int workers) {
  TWOGAUGE_REQUIRE(trials >= 100, "estimate_prob: at least 100 trials");
  const auto hits = per_replicate<std::uint32_t>(trials, workers, [&](std::uint64_t i) -> std::uint32_t {
    Rng rng = make_rng(seed, i);
    return event(rng, i) ? 1u : 0u;
  });
  Estimate e = wilson(count_bits(hits, 1)[0], trials);
  e.seed = seed;
  return e;
}

std::uint64_t derive_seed(std::uint64_t seed, const std::string& tag) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : tag) h = (h ^ c) * 0x100000001b3ULL;
  return splitmix64(seed ^ splitmix64(h));
}

ReportRow ratio_row(std::string group, std::string condition, const Estimate& est, double reference) {
  ReportRow r;
  r.group = std::move(group);
  r.condition = std::move(condition);
  r.estimate = est;
  r.reference = reference;
  r.defined = reference > 0.0;
  if (r.defined) {
    r.ratio = est.p_hat / reference;
    r.ratio_low = est.ci_low / reference;
    r.ratio_high = est.ci_high / reference;
  }
  return r;
}

ReportRow ratio_row(std::string group, std::string condition, const Estimate& est, const Estimate& ref_est,
                    double scale) {
  ReportRow r;
  r.group = std::move(group);
  r.condition = std::move(condition);
  r.estimate = est;
  r.reference_estimate = ref_est;
  r.reference = scale * ref_est.p_hat;
  r.defined = r.reference > 0.0;
  if (r.defined) {
    r.ratio = est.p_hat / r.reference;
    r.ratio_low = est.ci_low / (scale * ref_est.ci_high);
    r.ratio_high = ref_est.ci_low > 0.0 ? est.ci_high / (scale * ref_est.ci_low)
                                        : std::numeric_limits<double>::infinity();
  }
  return r;
}

void finalize(Report& report, const std::vector<std::pair<std::string, double>>& limits) {
  report.bands.clear();
  report.verdict = true;
  for (const auto& [group, limit] : limits) {
    Band b;
    b.group = group;
    b.limit = limit;
    bool any = false;
    for (const auto& row : report.rows) {
      if (row.group != group || !row.defined) continue;
      if (!any) b.min_ratio = b.max_ratio = row.ratio;
      b.min_ratio = std::min(b.min_ratio, row.ratio);
      b.max_ratio = std::max(b.max_ratio, row.ratio);
      any = true;
    }
    b.width = any && b.min_ratio > 0.0 ? b.max_ratio / b.min_ratio : std::numeric_limits<double>::infinity();
    b.pass = any && b.width <= limit;
    report.verdict = report.verdict && b.pass;
    report.bands.push_back(b);
  }
}

nlohmann::json to_json(const Estimate& e) {
  return {{"successes", e.successes}, {"trials", e.trials}, {"p_hat", e.p_hat}, {"ci_low", e.ci_low},
          {"ci_high", e.ci_high},     {"seed", e.seed},     {"dt", e.dt},       {"eta", e.eta}};
}

nlohmann::json to_json(const Report& r) {
  nlohmann::json j;
  j["experiment"] = r.experiment;
  j["seed"] = r.seed;
  j["parameters"] = r.parameters;
  auto& rows = j["rows"] = nlohmann::json::array();
  for (const auto& row : r.rows) {
    nlohmann::json x{{"group", row.group},
                     {"condition", row.condition},
                     {"estimate", to_json(row.estimate)},
                     {"reference", row.reference},
                     {"defined", row.defined}};
    if (row.defined) {
      x["ratio"] = row.ratio;
      x["ratio_ci"] = {row.ratio_low, std::isfinite(row.ratio_high) ? nlohmann::json(row.ratio_high) : nlohmann::json("inf")};
    } else {
      x["ratio"] = "undefined";
    }
    if (row.reference_estimate) x["reference_estimate"] = to_json(*row.reference_estimate);
    if (row.half_dt) {
      x["half_dt"] = to_json(*row.half_dt);
      x["half_dt_stable"] =
          std::abs(row.half_dt->p_hat - row.estimate.p_hat) < row.half_dt->ci_width() + row.estimate.ci_width();
    }
    rows.push_back(std::move(x));
  }
  auto& bands = j["bands"] = nlohmann::json::array();
  for (const auto& b : r.bands)
    bands.push_back({{"group", b.group},
                     {"min_ratio", b.min_ratio},
                     {"max_ratio", b.max_ratio},
                     {"width", std::isfinite(b.width) ? nlohmann::json(b.width) : nlohmann::json("inf")},
                     {"limit", b.limit},
                     {"pass", b.pass}});
  j["verdict"] = r.verdict ? "pass" : "fail";
  if (!r.extra.is_null()) j["extra"] = r.extra;
  return j;
}

std::string to_csv(const Report& r) {
  std::ostringstream s;
  s.precision(10);
  s << "group,condition,p_hat,ci_low,ci_high,reference,ratio\n";
  for (const auto& row : r.rows) {
    s << row.group << ',' << row.condition << ',' << row.estimate.p_hat << ',' << row.estimate.ci_low << ','
      << row.estimate.ci_high << ',' << row.reference << ',';
    if (row.defined) s << row.ratio;
    else s << "undefined";
    s << '\n';
  }
  return s.str();
}

void write_report(const Report& r, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::string stem = dir + "/" + r.experiment + "_" + std::to_string(r.seed);
  std::ofstream(stem + ".json") << to_json(r).dump(2) << '\n';
  std::ofstream(stem + ".csv") << to_csv(r);
  std::ofstream(stem + ".timing.json") << nlohmann::json{{"runtime_seconds", r.runtime}}.dump(2) << '\n';
}

// ---------------------------------------------------------------------------

Report run_lemma31(const Lemma31Config& cfg, const McOptions& mc) {
  const auto t0 = std::chrono::steady_clock::now();
  const double eps = cfg.eps;
  TWOGAUGE_REQUIRE(eps > 0.0 && eps < 1.0 / 3, "run_lemma31: eps must lie in (0, 1/3)");
  TWOGAUGE_REQUIRE(!cfg.deltas.empty(), "run_lemma31: no deltas");
  const Point y_far = cfg.x + Point(cfg.far_factor * eps, 0.0);
  const Point y_near = cfg.x + Point(cfg.near_factor * eps, 0.0);
  const double d_far = (y_far - cfg.x).norm(), d_near = (y_near - cfg.x).norm();
  TWOGAUGE_REQUIRE(d_far >= eps, "run_lemma31: far partner must lie at distance >= eps");
  TWOGAUGE_REQUIRE(d_near < eps, "run_lemma31: near partner must lie at distance < eps");
  for (const Point& p : {cfg.x, y_far, y_near})
    TWOGAUGE_REQUIRE(p.norm() <= 0.25, "run_lemma31: centers must lie in the quarter unit disk");
  for (double delta : cfg.deltas) {
    TWOGAUGE_REQUIRE(delta > 0.0 && delta < eps / 2, "run_lemma31: need delta < eps/2 (delta = " + fmt(delta) + ")");
    TWOGAUGE_REQUIRE(d_near > 3 * delta, "run_lemma31: need |x - y| > 3 delta (delta = " + fmt(delta) + ")");
    TWOGAUGE_REQUIRE((cfg.xi - cfg.x).norm() > delta, "run_lemma31: xi must lie outside D_x");
  }

  Report rep;
  rep.experiment = "lemma31";
  rep.seed = mc.seed;
  rep.parameters = base_parameters(mc);
  rep.parameters["eps"] = eps;
  rep.parameters["deltas"] = cfg.deltas;
  rep.parameters["x"] = {cfg.x.x(), cfg.x.y()};
  rep.parameters["xi"] = {cfg.xi.x(), cfg.xi.y()};
  rep.parameters["y_far"] = {y_far.x(), y_far.y()};
  rep.parameters["y_near"] = {y_near.x(), y_near.y()};

  const double le = std::abs(std::log(eps));
  const long half = half_trials(mc);
  for (double delta : cfg.deltas) {
    const double ld = std::abs(std::log(delta));
    const double dt = (delta / 4) * (delta / 4);
    const std::string dl = "delta=" + pow2_label(delta);

    auto single = [&](const Point& start, const std::string& tag, double step, long trials) {
      const BallTargets targets({cfg.x}, delta);
      const WalkOptions o = options_for(step, mc);
      const auto seed = derive_seed(mc.seed, tag);
      auto e = estimate_prob([&](Rng& rng, std::uint64_t) { return eps_double_walk(start, o, targets, eps, rng); },
                             trials, seed, mc.workers);
      e.seed = seed;
      e.dt = o.dt;
      e.eta = 0.0;
      return e;
    };
    auto pair = [&](const Point& y, const std::string& tag, double step, long trials) {
      const BallTargets targets({cfg.x, y}, delta);
      const WalkOptions o = options_for(step, mc);
      const auto seed = derive_seed(mc.seed, tag);
      auto e = estimate_prob(
          [&](Rng& rng, std::uint64_t) {
            EpsDoubleTracker tracker(2, eps);
            walk(mc.start, o, &targets, rng, [&](double t, const Point&, std::span<const std::int32_t> cells) {
              tracker.visit(t, cells);
              return tracker.fired_count() == 2;
            });
            return tracker.fired_count() == 2;
          },
          trials, seed, mc.workers);
      e.seed = seed;
      e.dt = o.dt;
      return e;
    };

    {
      auto row = ratio_row("single", dl, single(mc.start, "single/" + dl, dt, mc.trials), le / (ld * ld));
      if (half) row.half_dt = single(mc.start, "single/half/" + dl, dt / 2, half);
      rep.rows.push_back(row);
    }
    {
      const double lx = std::abs(std::log((cfg.xi - cfg.x).norm()));
      auto row = ratio_row("single_xi", dl, single(cfg.xi, "single_xi/" + dl, dt, mc.trials), le * lx / (ld * ld));
      if (half) row.half_dt = single(cfg.xi, "single_xi/half/" + dl, dt / 2, half);
      rep.rows.push_back(row);
    }
    {
      const double lxy = std::abs(std::log(d_far));
      auto row = ratio_row("pair_far", dl, pair(y_far, "pair_far/" + dl, dt, mc.trials), lxy * le * le / std::pow(ld, 4));
      if (half) row.half_dt = pair(y_far, "pair_far/half/" + dl, dt / 2, half);
      rep.rows.push_back(row);
    }
    {
      const double lxy = std::abs(std::log(d_near));
      auto row = ratio_row("pair_near", dl, pair(y_near, "pair_near/" + dl, dt, mc.trials), le * lxy * lxy / std::pow(ld, 4));
      if (half) row.half_dt = pair(y_near, "pair_near/half/" + dl, dt / 2, half);
      rep.rows.push_back(row);
    }
  }
  // the P_xi rows are reported with a band but do not enter the verdict
  finalize(rep, {{"single", cfg.band_single}, {"pair_far", cfg.band_pair}, {"pair_near", cfg.band_pair}});
  {
    Report aside = rep;
    finalize(aside, {{"single_xi", cfg.band_single}});
    const auto& b = aside.bands.front();
    rep.extra["band_single_xi"] = {{"min_ratio", b.min_ratio}, {"max_ratio", b.max_ratio}, {"width", b.width}};
  }
  // monotone in delta: the target shrinks with delta
  bool monotone = true;
  double prev = 2.0;
  std::vector<std::pair<double, double>> by_delta;
  for (const auto& row : rep.rows)
    if (row.group == "single") by_delta.emplace_back(0.0, row.estimate.p_hat);
  for (std::size_t k = 0; k < cfg.deltas.size() && k < by_delta.size(); ++k) by_delta[k].first = cfg.deltas[k];
  std::sort(by_delta.begin(), by_delta.end(), [](auto a, auto b) { return a.first > b.first; });
  for (const auto& [d, p] : by_delta) {
    monotone = monotone && p <= prev;
    prev = p;
  }
  rep.extra["monotone_in_delta"] = monotone;
  rep.runtime = elapsed(t0);
  return rep;
}

// ---------------------------------------------------------------------------

std::vector<NamedSet> standard_family(double resolution) {
  TWOGAUGE_REQUIRE(resolution > 0.0 && resolution < 0.05, "standard_family: resolution must lie in (0, 0.05)");
  std::vector<NamedSet> out;
  for (double r : {0.05, 0.1, 0.2}) {
    auto d = disk_builder(Point::Zero(), r)(resolution);
    d.set_label("disk(r=" + fmt(r) + ")");
    d.mark_target();
    out.push_back({std::move(d), resolution});
  }
  for (int n : {2, 3}) {
    auto c = subdivide(transformed(make_cantor(0.75, n), 0.6, Point::Zero()), resolution);
    c.set_label("cantor(alpha=0.75,n=" + std::to_string(n) + ",scale=0.6)");
    c.mark_target();
    out.push_back({std::move(c), resolution});
  }
  auto s = make_segment(-0.25, 0.25, 0.0, resolution);
  s.set_label("segment(length=0.5)");
  s.mark_target();
  out.push_back({std::move(s), resolution});
  return out;
}

Estimate estimate_eps_double(const NamedSet& set, double eps, const McOptions& mc, const std::string& tag) {
  const auto seed = derive_seed(mc.seed, tag);
  if (set.set.empty()) {
    Estimate e = wilson(0, mc.trials);
    e.seed = seed;
    return e;
  }
  const CellTargets targets(set.set, 0.0, set.segment_eta);
  const WalkOptions o = options_for(targets.default_dt(), mc);
  auto e = estimate_prob([&](Rng& rng, std::uint64_t) { return eps_double_walk(mc.start, o, targets, eps, rng); },
                         mc.trials, seed, mc.workers);
  e.seed = seed;
  e.dt = o.dt;
  e.eta = typical_eta(targets);
  return e;
}

namespace {

Estimate half_dt_eps_double(const NamedSet& set, double eps, const McOptions& mc, const std::string& tag) {
  McOptions h = mc;
  h.trials = half_trials(mc);
  h.dt_scale = mc.dt_scale / 2;
  return estimate_eps_double(set, eps, h, tag + "/half");
}

// P(I in A) for two paths from `start` stopped at `exit_radius`; optionally
// also P(eps_double) of the first path.
std::pair<Estimate, Estimate> intersection_estimate(const NamedSet& set, const McOptions& mc, const Point& start,
                                                    double exit_radius, double eps, const std::string& tag,
                                                    bool swap_paths = false) {
  const auto seed_a = derive_seed(mc.seed, tag + "/a"), seed_b = derive_seed(mc.seed, tag + "/b");
  if (set.set.empty()) {
    Estimate e = wilson(0, mc.trials);
    return {e, e};
  }
  const CellTargets targets(set.set, 0.0, set.segment_eta);
  const WalkOptions o = options_for(targets.default_dt(), mc, exit_radius);
  const auto masks = per_replicate<std::uint32_t>(mc.trials, mc.workers, [&](std::uint64_t i) -> std::uint32_t {
    Rng a = make_rng(swap_paths ? seed_b : seed_a, i), b = make_rng(swap_paths ? seed_a : seed_b, i);
    bool dbl = false;
    const bool meet = intersection_walk(start, o, targets, a, b, eps > 0.0 ? &dbl : nullptr, eps);
    return (meet ? 1u : 0u) | (dbl ? 2u : 0u);
  });
  const auto c = count_bits(masks, 2);
  const double eta = typical_eta(targets);
  return {make_estimate(c[0], mc.trials, seed_a, o.dt, eta), make_estimate(c[1], mc.trials, seed_a, o.dt, eta)};
}

}  // namespace

Report run_thm22(const std::vector<NamedSet>& family, double eps, const McOptions& mc, double band) {
  const auto t0 = std::chrono::steady_clock::now();
  Report rep;
  rep.experiment = "thm22";
  rep.seed = mc.seed;
  rep.parameters = base_parameters(mc);
  rep.parameters["eps"] = eps;
  rep.parameters["gauge"] = Gauge::hybrid(Gauge::log(), Gauge::log_squared(), eps).descriptor();
  auto& caps = rep.extra["cap_eps"] = nlohmann::json::object();
  for (const auto& s : family) {
    const std::string label = s.set.empty() ? "empty" : s.set.label();
    double cap = 0.0;
    if (!s.set.empty()) cap = cap_eps(s.set, eps, Gauge::log(), Gauge::log_squared()).value;
    caps[label] = cap;
    auto row = ratio_row("thm22", label, estimate_eps_double(s, eps, mc, "thm22/" + label), cap);
    if (half_trials(mc) && !s.set.empty()) row.half_dt = half_dt_eps_double(s, eps, mc, "thm22/" + label);
    rep.rows.push_back(row);
  }
  finalize(rep, {{"thm22", band}});
  rep.runtime = elapsed(t0);
  return rep;
}

NamedSet prop32_disk(double eps) {
  auto d = make_disk(Point::Zero(), eps / 4, eps / 16);
  d.set_label("disk(r=eps/4,eps=" + pow2_label(eps) + ")");
  return {std::move(d), eps / 16};
}

Report run_prop32(const std::vector<Prop32Case>& cases, const McOptions& mc, double band) {
  const auto t0 = std::chrono::steady_clock::now();
  Report rep;
  rep.experiment = "prop32";
  rep.seed = mc.seed;
  rep.parameters = base_parameters(mc);
  auto& eps_list = rep.parameters["eps"] = nlohmann::json::array();
  for (const auto& c : cases) {
    TWOGAUGE_REQUIRE(c.eps > 0.0 && c.eps < 1.0, "run_prop32: eps must lie in (0, 1)");
    TWOGAUGE_REQUIRE(c.set.set.empty() || c.set.set.diameter() <= c.eps,
                     "run_prop32: set diameter exceeds eps (" + c.set.set.label() + ")");
    eps_list.push_back(c.eps);
    const std::string label = (c.set.set.empty() ? std::string("empty") : c.set.set.label()) + ",eps=" + pow2_label(c.eps);
    const auto [meet, dbl] = intersection_estimate(c.set, mc, mc.start, kExitRadius, c.eps, "prop32/" + label);
    rep.rows.push_back(ratio_row("prop32", label, dbl, meet, std::abs(std::log(c.eps))));
  }
  finalize(rep, {{"prop32", band}});
  rep.runtime = elapsed(t0);
  return rep;
}

Report run_prop33(const std::vector<NamedSet>& family, const McOptions& mc, double band) {
  const auto t0 = std::chrono::steady_clock::now();
  Report rep;
  rep.experiment = "prop33";
  rep.seed = mc.seed;
  rep.parameters = base_parameters(mc);
  rep.parameters["gauge"] = Gauge::log_squared().descriptor();
  auto& caps = rep.extra["cap_log2"] = nlohmann::json::object();
  for (const auto& s : family) {
    const std::string label = s.set.empty() ? "empty" : s.set.label();
    const double cap = s.set.empty() ? 0.0 : capacity(s.set, Gauge::log_squared()).value;
    caps[label] = cap;
    const auto meet = intersection_estimate(s, mc, mc.start, kExitRadius, 0.0, "prop33/" + label).first;
    rep.rows.push_back(ratio_row("prop33", label, meet, cap));
  }
  finalize(rep, {{"prop33", band}});
  rep.runtime = elapsed(t0);
  return rep;
}

NamedSet cor34_disk(double eps) {
  auto d = make_disk(Point::Zero(), eps / 8, eps / 32);
  d.set_label("disk(r=eps/8,eps=" + pow2_label(eps) + ")");
  return {std::move(d), eps / 32};
}

Report run_cor34(const std::vector<Cor34Case>& cases, const McOptions& mc, double band) {
  const auto t0 = std::chrono::steady_clock::now();
  Report rep;
  rep.experiment = "cor34";
  rep.seed = mc.seed;
  rep.parameters = base_parameters(mc);
  rep.parameters.erase("start");
  auto& eps_list = rep.parameters["eps"] = nlohmann::json::array();
  auto& inner = rep.extra["p_inner"] = nlohmann::json::array();
  for (const auto& c : cases) {
    TWOGAUGE_REQUIRE(c.eps > 0.0 && c.eps < 1.0 / 3, "run_cor34: eps must lie in (0, 1/3)");
    TWOGAUGE_REQUIRE(c.set.set.empty() || c.set.set.within_disk(Point::Zero(), c.eps / 2),
                     "run_cor34: set must lie in the disk of radius eps/2 at the origin");
    eps_list.push_back(c.eps);
    const std::string label = (c.set.set.empty() ? std::string("empty") : c.set.set.label()) + ",eps=" + pow2_label(c.eps);
    const Point z(c.eps, 0.0);
    const Estimate p = intersection_estimate(c.set, mc, z, 2 * c.eps, 0.0, "cor34/inner/" + label).first;
    const Estimate pp = intersection_estimate(c.set, mc, z, kExitRadius, 0.0, "cor34/outer/" + label).first;
    const double l2 = std::pow(std::log(c.eps), 2);
    inner.push_back({{"condition", label}, {"estimate", to_json(p)}});
    if (p.p_hat * l2 >= 1.0) rep.rows.push_back(ratio_row("cor34", label, pp, 1.0));
    else rep.rows.push_back(ratio_row("cor34", label, pp, p, l2));
  }
  finalize(rep, {{"cor34", band}});
  rep.runtime = elapsed(t0);
  return rep;
}

SecondMoment second_moment_bound(const NamedSet& set, const DiscreteMeasure& mu, double eps, double delta,
                                 const McOptions& mc) {
  TWOGAUGE_REQUIRE(!set.set.empty(), "second_moment_bound: empty set");
  TWOGAUGE_REQUIRE(mu.weights.size() == static_cast<Eigen::Index>(set.set.size()),
                   "second_moment_bound: measure must live on the set's cells");
  TWOGAUGE_REQUIRE(delta > 0.0 && delta < 1.0 && eps > 0.0 && eps < 1.0, "second_moment_bound: eps, delta in (0, 1)");
  const double scale = std::pow(std::log(delta), 2) / std::abs(std::log(eps));
  const CellTargets targets(set.set, 0.0, set.segment_eta);
  const WalkOptions o = options_for(targets.default_dt(), mc);
  const auto seed = derive_seed(mc.seed, "second_moment/" + set.set.label());
  struct Sample {
    double x = 0.0;
    bool any = false;
  };
  const auto samples = per_replicate<Sample>(mc.trials, mc.workers, [&](std::uint64_t i) {
    Rng rng = make_rng(seed, i);
    EpsDoubleTracker tracker(targets.size(), eps);
    walk(mc.start, o, &targets, rng, [&](double t, const Point&, std::span<const std::int32_t> cells) {
      tracker.visit(t, cells);
      return false;
    });
    Sample s;
    for (auto c : tracker.fired_cells()) s.x += scale * mu.weights[c];
    s.any = tracker.fired();
    return s;
  });
  double sx = 0.0, sx2 = 0.0, sx3 = 0.0, sx4 = 0.0;
  long any = 0, positive = 0;
  for (const auto& s : samples) {
    const double x2 = s.x * s.x;
    sx += s.x;
    sx2 += x2;
    sx3 += x2 * s.x;
    sx4 += x2 * x2;
    any += s.any;
    positive += s.x > 0.0;
  }
  const double n = static_cast<double>(mc.trials);
  SecondMoment out;
  out.ex = sx / n;
  out.ex2 = sx2 / n;
  out.bound = out.ex2 > 0.0 ? out.ex * out.ex / out.ex2 : 0.0;
  if (out.ex2 > 0.0) {
    // delta method for m1^2 / m2
    const double m1 = out.ex, m2 = out.ex2, m3 = sx3 / n, m4 = sx4 / n;
    const double g1 = 2.0 * m1 / m2, g2 = -m1 * m1 / (m2 * m2);
    const double var = (g1 * g1 * (m2 - m1 * m1) + 2.0 * g1 * g2 * (m3 - m1 * m2) + g2 * g2 * (m4 - m2 * m2)) / n;
    out.bound_ci_half = kZ95 * std::sqrt(std::max(0.0, var));
  }
  out.direct = make_estimate(any, mc.trials, seed, o.dt, typical_eta(targets));
  out.positive = make_estimate(positive, mc.trials, seed, o.dt, typical_eta(targets));
  return out;
}

std::vector<SecondMomentCase> second_moment_cases(double eps) {
  constexpr double res = 1.0 / 64;
  std::vector<SecondMomentCase> out;
  {
    auto cell = CompactSet({Cell{Point::Zero(), Eigen::Vector2d(res / 2, res / 2)}}, "cell(side=2^-6)");
    cell.mark_target();
    out.push_back({{std::move(cell), res}, DiscreteMeasure::point_mass(1, 0), "point_mass", res, true});
  }
  auto cantor = subdivide(transformed(make_cantor(0.75, 2), 0.6, Point::Zero()), res);
  cantor.set_label("cantor(alpha=0.75,n=2,scale=0.6)");
  cantor.mark_target();
  auto disk = disk_builder(Point::Zero(), 0.1)(res);
  disk.set_label("disk(r=0.1)");
  disk.mark_target();
  for (auto* s : {&cantor, &disk}) {
    auto mu = cap_eps(*s, eps, Gauge::log(), Gauge::log_squared()).measure;
    out.push_back({{std::move(*s), res}, std::move(mu), "cap_eps_equilibrium", res, false});
  }
  return out;
}

Report run_second_moment(const std::vector<SecondMomentCase>& cases, double eps, const McOptions& mc) {
  const auto t0 = std::chrono::steady_clock::now();
  Report rep;
  rep.experiment = "second-moment";
  rep.seed = mc.seed;
  rep.parameters = base_parameters(mc);
  rep.parameters["eps"] = eps;
  rep.verdict = true;
  auto& details = rep.extra["cases"] = nlohmann::json::array();
  for (const auto& c : cases) {
    const auto sm = second_moment_bound(c.set, c.mu, eps, c.delta, mc);
    const double p_half = 0.5 * sm.direct.ci_width();
    const bool below = sm.bound <= sm.direct.ci_high + sm.bound_ci_half;
    const bool equal = !c.expect_equality || std::abs(sm.bound - sm.direct.p_hat) <= p_half + sm.bound_ci_half;
    rep.verdict = rep.verdict && below && equal;
    rep.rows.push_back(ratio_row("second_moment", c.set.set.label(), sm.direct, sm.bound));
    nlohmann::json d{{"set", c.set.set.label()},
                     {"measure", c.measure_label},
                     {"delta", c.delta},
                     {"ex", sm.ex},
                     {"ex2", sm.ex2},
                     {"bound", sm.bound},
                     {"bound_ci_half", sm.bound_ci_half},
                     {"direct", to_json(sm.direct)},
                     {"positive", to_json(sm.positive)},
                     {"bound_below_direct", below}};
    if (c.expect_equality) d["equal_within_ci"] = equal;
    details.push_back(std::move(d));
  }
  rep.runtime = elapsed(t0);
  return rep;
}

}  // namespace twogauge
