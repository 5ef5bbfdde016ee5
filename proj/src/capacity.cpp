#include "twogauge/capacity.hpp"

#include "twogauge/error.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <unordered_map>

namespace twogauge {

std::vector<Eigen::Index> DiscreteMeasure::support() const {
  std::vector<Eigen::Index> s;
  for (Eigen::Index i = 0; i < weights.size(); ++i)
    if (weights[i] > 0.0) s.push_back(i);
  return s;
}

DiscreteMeasure DiscreteMeasure::point_mass(Eigen::Index n, Eigen::Index i) {
  TWOGAUGE_REQUIRE(i >= 0 && i < n, "point mass index out of range");
  DiscreteMeasure m{Eigen::VectorXd::Zero(n)};
  m.weights[i] = 1.0;
  return m;
}

DiscreteMeasure DiscreteMeasure::uniform(Eigen::Index n) {
  TWOGAUGE_REQUIRE(n > 0, "uniform measure needs at least one node");
  return {Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n))};
}

double energy(const KernelMatrix& K, const DiscreteMeasure& mu) {
  TWOGAUGE_REQUIRE(mu.weights.size() == K.size(), "measure and kernel differ in dimension");
  return mu.weights.dot(K.apply(mu.weights));
}

double potential(const KernelMatrix& K, const DiscreteMeasure& mu, Eigen::Index i) {
  TWOGAUGE_REQUIRE(mu.weights.size() == K.size(), "measure and kernel differ in dimension");
  TWOGAUGE_REQUIRE(i >= 0 && i < K.size(), "node index out of range");
  double s = 0.0;
  for (Eigen::Index j = 0; j < K.size(); ++j)
    if (mu.weights[j] != 0.0) s += K(i, j) * mu.weights[j];
  return s;
}

double kkt_residual(const Eigen::VectorXd& w, const Eigen::VectorXd& phi, double lambda) {
  double below = 0.0, on_support = 0.0;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    below = std::max(below, lambda - phi[i]);
    if (w[i] > 0.0) on_support = std::max(on_support, std::abs(phi[i] - lambda));
  }
  return below + on_support;
}

namespace {

// Lowest index attaining the minimum.
Eigen::Index argmin(const Eigen::VectorXd& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (v[i] < v[best]) best = i;
  return best;
}

// Working-set size beyond which dense factorizations give way to the
// iterative solver.
constexpr std::size_t kDenseSupportCap = 1000;
constexpr std::size_t kCoarsenAbove = 20000;

struct State {
  Eigen::VectorXd w, phi;
  double E = 0.0;
  long iterations = 0;
};

// Conditional gradient with away steps; stops once the relative gap reaches
// `target` or the iteration budget is spent.
bool frank_wolfe(const KernelMatrix& K, State& st, double target, long budget,
                 std::size_t support_cap = std::numeric_limits<std::size_t>::max()) {
  const Eigen::Index n = K.size();
  Eigen::VectorXd col(n);
  std::vector<Eigen::Index> supp;
  for (Eigen::Index i = 0; i < n; ++i)
    if (st.w[i] > 0.0) supp.push_back(i);

  for (long it = 0; it < budget; ++it) {
    const Eigen::Index s = argmin(st.phi);
    const double fw_gap = st.E - st.phi[s];
    if (fw_gap <= target * st.E) break;
    if (supp.size() > support_cap) {
      st.E = st.w.dot(st.phi);
      return false;
    }
    Eigen::Index a = supp.front();
    for (auto i : supp)
      if (st.phi[i] > st.phi[a]) a = i;
    const double away_gap = st.phi[a] - st.E;
    ++st.iterations;

    if (fw_gap >= away_gap || st.w[a] >= 1.0) {
      K.column(s, col);
      const double c = K.diagonal(s) - 2.0 * st.phi[s] + st.E;
      const double gamma = c > 0.0 ? std::min(1.0, fw_gap / c) : 1.0;
      st.w *= 1.0 - gamma;
      if (st.w[s] == 0.0) supp.insert(std::lower_bound(supp.begin(), supp.end(), s), s);
      st.w[s] += gamma;
      st.phi = (1.0 - gamma) * st.phi + gamma * col;
      st.E += -2.0 * gamma * fw_gap + gamma * gamma * c;
      if (gamma == 1.0) {
        supp.assign(1, s);
        st.w.setZero();
        st.w[s] = 1.0;
      }
    } else {
      K.column(a, col);
      const double gamma_max = st.w[a] / (1.0 - st.w[a]);
      const double c = st.E - 2.0 * st.phi[a] + K.diagonal(a);
      const double gamma = c > 0.0 ? std::min(gamma_max, away_gap / c) : gamma_max;
      st.w *= 1.0 + gamma;
      st.w[a] -= gamma;
      st.phi = (1.0 + gamma) * st.phi - gamma * col;
      st.E += -2.0 * gamma * away_gap + gamma * gamma * c;
      if (gamma == gamma_max || st.w[a] <= 0.0) {
        st.w[a] = 0.0;
        supp.erase(std::lower_bound(supp.begin(), supp.end(), a));
      }
    }
  }
  st.E = st.w.dot(st.phi);
  return true;
}

// Conjugate gradients for K_SS x = b on the nodes flagged in `in_s`, with the
// lattice preconditioner restricted to S (Jacobi when there is none). Vectors
// are full length and vanish off S. Returns false on breakdown.
bool restricted_pcg(const KernelMatrix& K, const std::vector<char>& in_s, const Eigen::VectorXd& b,
                    Eigen::VectorXd& x, double rtol, int max_it, long& work) {
  const Eigen::Index n = K.size();
  auto mask = [&](Eigen::VectorXd& v) {
    for (Eigen::Index i = 0; i < n; ++i)
      if (!in_s[static_cast<std::size_t>(i)]) v[i] = 0.0;
  };
  const bool lattice = K.has_preconditioner();
  auto precondition = [&](const Eigen::VectorXd& r) {
    Eigen::VectorXd z(n);
    if (lattice) {
      z = K.apply_preconditioner(r);
    } else {
      for (Eigen::Index i = 0; i < n; ++i) z[i] = r[i] / K.diagonal(i);
    }
    mask(z);
    return z;
  };
  mask(x);
  Eigen::VectorXd r = b - K.apply(x);
  mask(r);
  const double bnorm = b.norm();
  if (r.norm() <= rtol * bnorm) return true;
  Eigen::VectorXd z = precondition(r), p = z, Ap(n);
  double rz = r.dot(z);
  for (int it = 0; it < max_it; ++it) {
    ++work;
    Ap = K.apply(p);
    mask(Ap);
    const double pAp = p.dot(Ap);
    if (!(pAp > 0.0)) return false;
    const double alpha = rz / pAp;
    x += alpha * p;
    r -= alpha * Ap;
    if (r.norm() <= rtol * bnorm) {
      // confirm with the true residual
      r = b - K.apply(x);
      mask(r);
      if (r.norm() <= 10.0 * rtol * bnorm) return true;
    }
    z = precondition(r);
    const double rz_next = r.dot(z);
    p = z + (rz_next / rz) * p;
    rz = rz_next;
  }
  return false;
}

// Support guess from the same problem on 2x2 blocks of a square lattice: a
// node starts in the working set when its block or a neighbouring block
// carries coarse equilibrium mass. All nodes when there is no usable lattice.
std::vector<char> coarse_support(const KernelMatrix& K, const SolverOptions& opts) {
  const auto n = static_cast<std::size_t>(K.size());
  std::vector<char> all(n, 1);
  if (n < kCoarsenAbove || !K.has_gauge()) return all;
  const auto& nodes = K.nodes();
  const double d0 = nodes[0].diameter;
  const double step = d0 / std::numbers::sqrt2;
  if (!(d0 > 0.0)) return all;
  const Point origin = nodes[0].x;
  std::vector<std::int64_t> block_x(n), block_y(n);
  std::unordered_map<std::int64_t, std::int32_t> index;
  std::vector<Node> coarse;
  constexpr std::int64_t kSpan = 1 << 30;
  for (std::size_t i = 0; i < n; ++i) {
    if (nodes[i].diameter != d0) return all;
    const double ux = (nodes[i].x.x() - origin.x()) / step, uy = (nodes[i].x.y() - origin.y()) / step;
    const double rx = std::round(ux), ry = std::round(uy);
    if (std::abs(ux - rx) > 1e-6 || std::abs(uy - ry) > 1e-6 || std::abs(rx) > 1e8 || std::abs(ry) > 1e8)
      return all;
    const auto bx = static_cast<std::int64_t>(std::floor(rx / 2)), by = static_cast<std::int64_t>(std::floor(ry / 2));
    block_x[i] = bx;
    block_y[i] = by;
    if (index.emplace(bx * kSpan + by, static_cast<std::int32_t>(coarse.size())).second)
      coarse.push_back({origin + step * Point(2.0 * bx + 0.5, 2.0 * by + 0.5), 2.0 * d0});
  }
  const KernelMatrix Kc(std::move(coarse), K.gauge(), K.theta());
  if (!Kc.has_preconditioner()) return all;
  const auto rc = equilibrium_measure(Kc, opts);
  std::vector<char> in_s(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::int64_t bx = block_x[i], by = block_y[i];
    for (std::int64_t a = -1; a <= 1 && !in_s[i]; ++a)
      for (std::int64_t b = -1; b <= 1; ++b) {
        const auto it = index.find((bx + a) * kSpan + by + b);
        if (it != index.end() && rc.measure.weights[it->second] > 0.0) {
          in_s[i] = 1;
          break;
        }
      }
  }
  return in_s;
}

// Active-set iteration for equilibria whose support covers most nodes: solve
// K_SS x = 1 on the working set, drop nodes with negative weight, readmit
// nodes whose potential falls below the level, repeat.
bool dense_support_solve(const KernelMatrix& K, State& st, double tol, std::vector<char> in_s) {
  const Eigen::Index n = K.size();
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n), ones(n);
  bool tight = false;
  for (int round = 0; round < 80; ++round) {
    ++st.iterations;
    for (Eigen::Index i = 0; i < n; ++i) ones[i] = in_s[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
    long work = 0;
    if (!restricted_pcg(K, in_s, ones, x, tight ? 1e-11 : 1e-7, 2000, work)) return false;
    st.iterations += work;
    const double total = x.sum();
    if (!(total > 0.0)) return false;
    const Eigen::VectorXd w = x / total;
    const double level = 1.0 / total;
    const Eigen::VectorXd phi = K.apply(w);
    if (tight) {
      // accept the clipped iterate once it certifies
      const Eigen::VectorXd c = w.cwiseMax(0.0) / w.cwiseMax(0.0).sum();
      const Eigen::VectorXd c_phi = K.apply(c);
      const double c_e = c.dot(c_phi);
      if (kkt_residual(c, c_phi, c_e) <= 0.5 * tol * c_e) {
        st.w = c;
        st.phi = c_phi;
        st.E = c_e;
        return true;
      }
    }
    // loose rounds ignore sign changes and violations below the solve accuracy
    const double drop_below = tight ? 0.0 : -1e-4 / static_cast<double>(n);
    const double add_below = level * (1.0 - (tight ? 0.25 * tol : 1e-6));
    std::size_t dropped = 0, added = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      auto& flag = in_s[static_cast<std::size_t>(i)];
      if (flag && w[i] < drop_below) {
        flag = 0;
        x[i] = 0.0;
        ++dropped;
      } else if (!flag && phi[i] < add_below) {
        flag = 1;
        ++added;
      }
    }
    if (dropped == 0 && added == 0) {
      if (tight && (w.array() >= 0.0).all()) {
        st.w = w;
        st.phi = phi;
        st.E = w.dot(phi);
        return true;
      }
      tight = true;
    }
  }
  return false;
}

// Minimizer of w'K_WW w subject to sum(w) = 1 on the working set, from the
// bordered system [K_WW 1; 1' 0] [w; -lambda] = [0; 1].
Eigen::VectorXd face_minimizer(const KernelMatrix& K, const std::vector<Eigen::Index>& W) {
  const auto m = static_cast<Eigen::Index>(W.size());
  Eigen::MatrixXd A(m + 1, m + 1);
  A.topLeftCorner(m, m) = K.block(W);
  A.col(m).head(m).setOnes();
  A.row(m).head(m).setOnes();
  A(m, m) = 0.0;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m + 1);
  rhs[m] = 1.0;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(A);
  Eigen::VectorXd x = lu.solve(rhs);
  x += lu.solve(rhs - A * x);  // one step of iterative refinement
  return x.head(m);
}

enum class Polish { Done, OutOfBudget, Stalled, TooLarge };

// Active-set polish with column generation.
Polish polish(const KernelMatrix& K, State& st, double tol, long max_iter) {
  const Eigen::Index n = K.size();
  std::vector<Eigen::Index> W;
  for (Eigen::Index i = 0; i < n; ++i)
    if (st.w[i] > 0.0) W.push_back(i);
  double last_E = std::numeric_limits<double>::infinity();
  bool single = false;
  int stalls = 0;

  while (st.iterations < max_iter) {
    ++st.iterations;
    if (W.size() > kDenseSupportCap && K.has_preconditioner()) return Polish::TooLarge;
    const Eigen::VectorXd v = face_minimizer(K, W);
    if (!v.allFinite()) throw Error("singular kernel block in active-set solve");

    if (v.minCoeff() < 0.0) {
      // freshly added nodes that the face solve wants negative leave again
      std::vector<Eigen::Index> keep;
      for (std::size_t k = 0; k < W.size(); ++k)
        if (!(st.w[W[k]] == 0.0 && v[static_cast<Eigen::Index>(k)] < 0.0)) keep.push_back(W[k]);
      if (keep.size() < W.size()) {
        W.swap(keep);
        continue;
      }
      keep.clear();
      // step from the current feasible point toward v until a weight hits zero
      double t = 1.0;
      for (std::size_t k = 0; k < W.size(); ++k) {
        const double wi = st.w[W[k]], vi = v[static_cast<Eigen::Index>(k)];
        if (vi < 0.0) t = std::min(t, wi / (wi - vi));
      }
      for (std::size_t k = 0; k < W.size(); ++k) {
        const Eigen::Index i = W[k];
        const double wi = st.w[i], vi = v[static_cast<Eigen::Index>(k)];
        const double next = wi + t * (vi - wi);
        const bool blocking = vi < 0.0 && wi / (wi - vi) <= t;
        st.w[i] = blocking || next <= 0.0 ? 0.0 : next;
        if (st.w[i] > 0.0) keep.push_back(i);
      }
      st.w /= st.w.sum();
      W.swap(keep);
      continue;
    }

    for (std::size_t k = 0; k < W.size(); ++k) st.w[W[k]] = v[static_cast<Eigen::Index>(k)];
    st.w /= st.w.sum();
    Eigen::VectorXd w_sub(static_cast<Eigen::Index>(W.size()));
    for (std::size_t k = 0; k < W.size(); ++k) w_sub[static_cast<Eigen::Index>(k)] = st.w[W[k]];
    st.phi = K.apply_columns(W, w_sub);
    st.E = w_sub.dot(st.phi(W));

    std::vector<Eigen::Index> violators;
    const double threshold = st.E * (1.0 - 0.25 * tol);
    std::vector<char> in_w(static_cast<std::size_t>(n), 0);
    for (auto i : W) in_w[static_cast<std::size_t>(i)] = 1;
    for (Eigen::Index i = 0; i < n; ++i)
      if (!in_w[static_cast<std::size_t>(i)] && st.phi[i] < threshold) violators.push_back(i);
    if (violators.empty()) return Polish::Done;

    std::stable_sort(violators.begin(), violators.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return st.phi[a] < st.phi[b]; });
    if (!(st.E < last_E)) {
      if (single && ++stalls >= 3) return Polish::Stalled;
      single = true;
    } else {
      single = false;
    }
    last_E = st.E;
    const std::size_t batch = single ? 1 : std::max<std::size_t>(32, W.size() / 2);
    if (violators.size() > batch) violators.resize(batch);
    W.insert(W.end(), violators.begin(), violators.end());
    std::sort(W.begin(), W.end());
  }
  return Polish::OutOfBudget;
}

}  // namespace

CapacityResult equilibrium_measure(const KernelMatrix& K, const SolverOptions& opts) {
  TWOGAUGE_REQUIRE(K.size() > 0, "equilibrium measure needs at least one node");
  TWOGAUGE_REQUIRE(opts.tol > 0.0, "solver tolerance must be positive");
  TWOGAUGE_REQUIRE(opts.max_iter > 0, "iteration budget must be positive");
  const Eigen::Index n = K.size();

  State st;
  st.w = Eigen::VectorXd::Zero(n);
  Eigen::Index start = 0;
  for (Eigen::Index i = 1; i < n; ++i)
    if (K.diagonal(i) < K.diagonal(start)) start = i;
  st.w[start] = 1.0;
  st.phi.resize(n);
  K.column(start, st.phi);
  st.E = K.diagonal(start);

  const long fw_budget = std::min<long>(opts.max_iter, 4 * static_cast<long>(n) + 100);
  bool large = !frank_wolfe(K, st, std::max(opts.tol, 1e-3), fw_budget, kDenseSupportCap) &&
               K.has_preconditioner();
  bool polished = false;
  if (!large) {
    try {
      const auto outcome = polish(K, st, opts.tol, opts.max_iter);
      polished = outcome == Polish::Done;
      large = outcome == Polish::TooLarge;
    } catch (const Error&) {
    }
  }
  if (large) {
    State trial = st;
    if (dense_support_solve(K, trial, opts.tol, coarse_support(K, opts))) {
      st = std::move(trial);
      polished = true;
    }
  }
  // stalled or singular polish: continue with conditional gradient on the remaining budget
  if (!polished) {
    st.phi = K.apply(st.w);
    st.E = st.w.dot(st.phi);
    frank_wolfe(K, st, opts.tol, opts.max_iter - st.iterations);
  }

  CapacityResult r;
  r.measure.weights = st.w;
  r.potential = K.apply(st.w);
  r.energy = st.w.dot(r.potential);
  r.value = 1.0 / r.energy;
  r.gap = r.energy - r.potential.minCoeff();
  r.kkt_residual = kkt_residual(st.w, r.potential, r.energy);
  r.iterations = st.iterations;
  r.converged = r.kkt_residual <= opts.tol * r.energy;
  r.gauge = K.description();
  return r;
}

CapacityResult capacity(const CompactSet& set, const Gauge& gauge, const SolverOptions& opts,
                        double theta) {
  auto r = equilibrium_measure(kernel_matrix(set, gauge, theta), opts);
  r.set_label = set.label();
  return r;
}

RegularPartition regular_points(const CapacityResult& result, double tol) {
  RegularPartition p;
  for (Eigen::Index i = 0; i < result.potential.size(); ++i) {
    if (std::abs(result.potential[i] - result.energy) <= tol * result.energy)
      p.regular.push_back(i);
    else
      p.nonregular.push_back(i);
  }
  return p;
}

RegularPartition regular_points(const CompactSet& set, const Gauge& gauge, double tol,
                                const SolverOptions& opts) {
  const auto r = capacity(set, gauge, opts);
  if (!r.converged) throw Error("equilibrium solve did not converge; regular points undefined");
  return regular_points(r, tol);
}

nlohmann::json to_json(const CapacityResult& r) {
  nlohmann::json support_idx = nlohmann::json::array(), support_w = nlohmann::json::array();
  for (Eigen::Index i = 0; i < r.measure.weights.size(); ++i)
    if (r.measure.weights[i] > 0.0) {
      support_idx.push_back(i);
      support_w.push_back(r.measure.weights[i]);
    }
  return {{"set_label", r.set_label},
          {"gauge", r.gauge},
          {"capacity", r.value},
          {"energy", r.energy},
          {"kkt_residual", r.kkt_residual},
          {"duality_gap", r.gap},
          {"iterations", r.iterations},
          {"converged", r.converged},
          {"nodes", r.measure.weights.size()},
          {"support", {{"indices", support_idx}, {"weights", support_w}}}};
}

}  // namespace twogauge
