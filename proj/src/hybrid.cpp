#include "twogauge/hybrid.hpp"

#include "twogauge/error.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace twogauge {

namespace {

constexpr double kResolutionSlack = 1e-9;
constexpr double kInitialPenalty = 1e-2;  // times E_f / E_g at the f-equilibrium
constexpr int kPenaltyRounds = 6;
constexpr int kBisections = 60;
constexpr std::size_t kConstrainedDenseLimit = 4096;

}  // namespace

CapacityResult cap_eps(const CompactSet& set, double eps, const Gauge& f, const Gauge& g,
                       const SolverOptions& opts, double theta) {
  TWOGAUGE_REQUIRE(eps > 0.0 && eps < 1.0, "cap_eps: eps must lie in (0, 1)");
  const double required = eps / 4;
  if (set.resolution() > required * (1.0 + kResolutionSlack))
    throw UnderResolvedError(set.resolution(), required);
  return capacity(set, Gauge::hybrid(f, g, eps), opts, theta);
}

SetBuilder disk_builder(const Point& center, double radius) {
  return [center, radius](double resolution) {
    auto d = make_disk(center, radius, resolution / std::numbers::sqrt2);
    d.set_label("disk(r=" + std::to_string(radius) + ")");
    return d;
  };
}

int cantor_depth_for(double alpha, double eps) {
  TWOGAUGE_REQUIRE(eps > 0.0 && eps < 1.0, "cantor_depth_for: eps must lie in (0, 1)");
  // log2 of the interval length is -2^(alpha n); match it to log2(eps).
  const double target = std::log2(-std::log2(eps)) / alpha;
  int best = 0;
  double best_gap = std::numeric_limits<double>::infinity();
  for (int n = 0; n <= static_cast<int>(std::ceil(target)) + 1; ++n) {
    const double gap = std::abs(std::exp2(alpha * n) + std::log2(eps));
    if (gap < best_gap) best_gap = gap, best = n;
  }
  return best;
}

SetBuilder cantor_builder(double alpha, double rho, double scale) {
  TWOGAUGE_REQUIRE(rho > 0.0 && rho <= 0.25, "cantor_builder: rho must lie in (0, 1/4]");
  TWOGAUGE_REQUIRE(scale > 0.0, "cantor_builder: scale must be positive");
  return [alpha, rho, scale](double resolution) {
    const int n = cantor_depth_for(alpha, resolution / rho);
    auto c = subdivide(transformed(make_cantor(alpha, n), scale, Point::Zero()), resolution);
    std::ostringstream s;
    s << "cantor(alpha=" << alpha << ",n=" << n << ",scale=" << scale << ")";
    c.set_label(s.str());
    return c;
  };
}

std::vector<double> dyadic_schedule(int first, int last) {
  TWOGAUGE_REQUIRE(first <= last, "dyadic_schedule: empty range");
  std::vector<double> out;
  for (int k = first; k <= last; ++k) out.push_back(std::ldexp(1.0, -k));
  return out;
}

bool nondecreasing(const std::vector<double>& values, double slack) {
  for (std::size_t k = 1; k < values.size(); ++k)
    if (values[k] < values[k - 1] * (1.0 - slack)) return false;
  return true;
}

HybridResult cap_hybrid(const SetBuilder& build, const std::vector<double>& eps_schedule, double rho,
                        const Gauge& f, const Gauge& g, const SolverOptions& opts, double theta) {
  TWOGAUGE_REQUIRE(!eps_schedule.empty(), "cap_hybrid: empty schedule");
  TWOGAUGE_REQUIRE(rho > 0.0 && rho <= 0.25, "cap_hybrid: coupling must lie in (0, 1/4]");
  for (std::size_t k = 1; k < eps_schedule.size(); ++k)
    TWOGAUGE_REQUIRE(eps_schedule[k] < eps_schedule[k - 1], "cap_hybrid: schedule must be strictly decreasing");

  HybridResult out;
  out.f = f.descriptor();
  out.g = g.descriptor();
  out.coupling = rho;
  out.eps_schedule = eps_schedule;
  CompactSet last;
  std::vector<double> values;
  for (double eps : eps_schedule) {
    const double res = rho * eps;
    const auto t0 = std::chrono::steady_clock::now();
    CompactSet set = build(res);
    const auto r = cap_eps(set, eps, f, g, opts, theta);
    HybridPoint p;
    p.eps = eps;
    p.resolution = set.resolution();
    p.value = r.value;
    p.energy = r.energy;
    p.kkt_residual = r.kkt_residual;
    p.converged = r.converged;
    p.nodes = static_cast<long>(set.size());
    p.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.resolution_schedule.push_back(p.resolution);
    out.cap_values.push_back(p);
    values.push_back(r.value);
    out.set_label = set.label();
    last = std::move(set);
  }
  out.monotone_ok = nondecreasing(values);
  out.limit_estimate = values.back();
  if (values.size() >= 3) {
    const double x0 = values[values.size() - 3], x1 = values[values.size() - 2], x2 = values.back();
    const double den = (x2 - x1) - (x1 - x0);
    if (den != 0.0) out.aitken_estimate = x2 - (x2 - x1) * (x2 - x1) / den;
  }
  out.cap_f = capacity(last, f, opts, theta).value;
  return out;
}

nlohmann::json to_json(const HybridResult& r) {
  nlohmann::json j;
  j["set_label"] = r.set_label;
  j["f"] = r.f;
  j["g"] = r.g;
  j["coupling"] = r.coupling;
  j["eps_schedule"] = r.eps_schedule;
  j["resolution_schedule"] = r.resolution_schedule;
  auto& vals = j["cap_values"] = nlohmann::json::array();
  for (const auto& p : r.cap_values)
    vals.push_back({{"eps", p.eps},
                    {"resolution", p.resolution},
                    {"capacity", p.value},
                    {"energy", p.energy},
                    {"kkt_residual", p.kkt_residual},
                    {"converged", p.converged},
                    {"nodes", p.nodes},
                    {"seconds", p.seconds}});
  j["limit_estimate"] = r.limit_estimate;
  j["monotone_ok"] = r.monotone_ok;
  if (r.aitken_estimate) j["aitken_estimate"] = *r.aitken_estimate;
  else j["aitken_estimate"] = nullptr;
  j["cap_f"] = r.cap_f;
  j["band"] = {r.limit_estimate, r.cap_f};
  return j;
}

std::string to_csv(const HybridResult& r) {
  std::ostringstream s;
  s.precision(17);
  s << "eps,resolution,cap_eps,kkt_residual\n";
  for (const auto& p : r.cap_values) s << p.eps << ',' << p.resolution << ',' << p.value << ',' << p.kkt_residual << '\n';
  return s.str();
}

ConstrainedResult cap_constrained_solve(const CompactSet& set, const Gauge& f, const Gauge& g, double gamma,
                                        const SolverOptions& opts, double theta) {
  TWOGAUGE_REQUIRE(gamma > 0.0, "cap_constrained: gamma must be positive");
  TWOGAUGE_REQUIRE(set.size() <= kConstrainedDenseLimit, "cap_constrained: set too large for dense kernels");
  const KernelMatrix Kf = kernel_matrix(set, f, theta);
  const KernelMatrix Kg = kernel_matrix(set, g, theta);
  const Eigen::MatrixXd F = Kf.to_dense(), G = Kg.to_dense();

  auto evaluate = [&](double mu, ConstrainedResult& out) {
    CapacityResult r;
    if (mu == 0.0) {
      r = equilibrium_measure(Kf, opts);
    } else if (std::isinf(mu)) {
      r = equilibrium_measure(Kg, opts);
    } else {
      // (F + mu G) / (1 + mu) keeps the entries on the scale of F and G.
      KernelMatrix L(Kf.nodes(), (F + mu * G) / (1.0 + mu), "lagrangian");
      r = equilibrium_measure(L, opts);
    }
    out.measure = r.measure;
    out.f_energy = energy(Kf, r.measure);
    out.g_energy = energy(Kg, r.measure);
    out.value = 1.0 / out.f_energy;
    out.multiplier = mu;
  };

  ConstrainedResult best;
  evaluate(0.0, best);
  if (std::isinf(gamma) || best.g_energy <= gamma) return best;

  ConstrainedResult g_opt;
  evaluate(std::numeric_limits<double>::infinity(), g_opt);
  if (!(gamma > g_opt.g_energy))
    throw PreconditionError("cap_constrained: infeasible gamma " + std::to_string(gamma) +
                            " (minimal g-energy " + std::to_string(g_opt.g_energy) + ")");

  // Escalate the multiplier until the constraint holds, then bisect in
  // t = mu / (1 + mu) between the last infeasible and the first feasible value.
  double lo = 0.0, hi = 1.0;  // t-space
  ConstrainedResult feasible = g_opt, trial;
  double mu = kInitialPenalty * best.f_energy / best.g_energy;
  for (int round = 0; round < kPenaltyRounds; ++round, mu *= 10.0) {
    evaluate(mu, trial);
    if (trial.g_energy <= gamma) {
      hi = mu / (1.0 + mu);
      feasible = trial;
      break;
    }
    lo = mu / (1.0 + mu);
  }
  for (int it = 0; it < kBisections; ++it) {
    if (feasible.g_energy >= gamma * (1.0 - opts.tol)) break;
    const double t = 0.5 * (lo + hi);
    if (t <= lo || t >= hi) break;
    evaluate(t / (1.0 - t), trial);
    if (trial.g_energy <= gamma) {
      hi = t;
      feasible = trial;
    } else {
      lo = t;
    }
  }
  return feasible;
}

double cap_constrained(const CompactSet& set, const Gauge& f, const Gauge& g, double gamma,
                       const SolverOptions& opts, double theta) {
  return cap_constrained_solve(set, f, g, gamma, opts, theta).value;
}

}  // namespace twogauge
