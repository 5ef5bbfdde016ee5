#include "twogauge/polar.hpp"

#include "twogauge/error.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <thread>

namespace twogauge {

namespace {

constexpr std::size_t kBallDenseLimit = 4096;

void check_schedule(const CompactSet& set, const std::vector<double>& radii) {
  TWOGAUGE_REQUIRE(!radii.empty(), "radius schedule is empty");
  for (std::size_t k = 1; k < radii.size(); ++k)
    TWOGAUGE_REQUIRE(radii[k] < radii[k - 1], "radius schedule must be decreasing");
  TWOGAUGE_REQUIRE(radii.back() > 2.0 * set.resolution(),
                   "smallest radius must exceed twice the resolution");
}

// Nodes with |y - xi| < r, in node order.
std::vector<Eigen::Index> ball(const std::vector<Node>& nodes, std::size_t xi, double r) {
  std::vector<Eigen::Index> idx;
  for (std::size_t j = 0; j < nodes.size(); ++j)
    if ((nodes[j].x - nodes[xi].x).norm() < r) idx.push_back(static_cast<Eigen::Index>(j));
  return idx;
}

// Martin matrix M(a, b) = K(a, b) / K(xi, b) on the nodes `idx`, with the
// diagonal rule standing in for K(xi, xi).
Eigen::MatrixXd martin_matrix(const KernelMatrix& K, std::size_t xi, const std::vector<Eigen::Index>& idx) {
  Eigen::MatrixXd M = K.block(idx);
  Eigen::VectorXd col(K.size());
  K.column(static_cast<Eigen::Index>(xi), col);
  for (Eigen::Index b = 0; b < M.cols(); ++b) M.col(b) /= col[idx[static_cast<std::size_t>(b)]];
  return M;
}

std::vector<Node> pick(const std::vector<Node>& nodes, const std::vector<Eigen::Index>& idx) {
  std::vector<Node> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(nodes[static_cast<std::size_t>(i)]);
  return out;
}

double punctured_martin_cap(const KernelMatrix& K, std::size_t xi, double r, const SolverOptions& solver) {
  auto idx = ball(K.nodes(), xi, r);
  std::erase(idx, static_cast<Eigen::Index>(xi));
  if (idx.empty()) return 0.0;
  TWOGAUGE_REQUIRE(idx.size() <= kBallDenseLimit, "local Martin capacity: ball holds too many nodes");
  const Eigen::MatrixXd M = martin_matrix(K, xi, idx);
  const KernelMatrix sym(pick(K.nodes(), idx), 0.5 * (M + M.transpose()), "martin");
  const auto res = equilibrium_measure(sym, solver);
  if (!res.converged) throw Error("Martin capacity solve did not converge");
  return res.value;
}

PointClassification classify_node(const KernelMatrix& K, std::size_t xi, const std::vector<double>& radii,
                                  const PolarOptions& opts) {
  PointClassification pc;
  pc.node = xi;
  try {
    bool regular_everywhere = true;
    for (double r : radii) {
      RadiusRecord rec;
      rec.radius = r;
      rec.martin_cap = punctured_martin_cap(K, xi, r, opts.solver);

      const auto idx = ball(K.nodes(), xi, r);
      TWOGAUGE_REQUIRE(idx.size() <= kBallDenseLimit, "classify: ball holds too many nodes");
      rec.ball_nodes = static_cast<long>(idx.size());
      if (idx.size() == 1) {
        // a lone node stands for the point xi, which carries no capacity
        regular_everywhere = false;
        pc.radii.push_back(rec);
        continue;
      }
      const Eigen::MatrixXd B = K.block(idx);
      const KernelMatrix Kb(pick(K.nodes(), idx), B, K.description());
      const auto eq = equilibrium_measure(Kb, opts.solver);
      if (!eq.converged) throw Error("ball equilibrium solve did not converge");
      rec.f_cap = eq.value;
      const auto pos = std::lower_bound(idx.begin(), idx.end(), static_cast<Eigen::Index>(xi)) - idx.begin();
      const double phi_xi = eq.potential[pos];
      rec.regular = rec.f_cap > 0.0 && std::abs(phi_xi - eq.energy) <= opts.regular_tol * eq.energy;
      if (rec.regular) {
        // row pos of B holds K(xi, y) over the ball
        const Eigen::VectorXd k_xi = B.row(pos).transpose();
        const Eigen::MatrixXd M = B.array().rowwise() / k_xi.transpose().array();
        const Eigen::VectorXd rho = eq.measure.weights.cwiseProduct(k_xi) / phi_xi;
        rec.certificate = rho.dot(M * rho);
      }
      regular_everywhere = regular_everywhere && rec.regular;
      pc.radii.push_back(rec);
    }
    pc.nlmc = pc.radii.back().martin_cap >= opts.threshold;
    pc.strongly_regular = regular_everywhere;
  } catch (const Error& e) {
    pc.indeterminate = true;
    pc.nlmc = false;
    pc.strongly_regular = false;
    pc.error = e.what();
  }
  return pc;
}

}  // namespace

std::vector<double> default_radius_schedule(const CompactSet& set) {
  TWOGAUGE_REQUIRE(!set.empty(), "radius schedule of an empty set");
  const double diam = set.diameter(), floor = 2.0 * set.resolution();
  std::vector<double> radii;
  for (int k = 1; k < 64; ++k) {
    const double r = std::ldexp(diam, -k);
    if (!(r > floor)) break;
    radii.push_back(r);
  }
  TWOGAUGE_REQUIRE(!radii.empty(), "no radius 2^-k diam(A) exceeds twice the resolution");
  return radii;
}

double local_martin_cap(const CompactSet& set, std::size_t xi, double r, const Gauge& gauge,
                        const PolarOptions& opts) {
  TWOGAUGE_REQUIRE(xi < set.size(), "local_martin_cap: node index out of range");
  TWOGAUGE_REQUIRE(r > 2.0 * set.resolution(), "local_martin_cap: radius must exceed twice the resolution");
  const auto K = kernel_matrix(set, gauge, opts.kernel_theta);
  return punctured_martin_cap(K, xi, r, opts.solver);
}

std::string PointClassification::nlmc_label() const {
  return indeterminate ? "indeterminate" : nlmc ? "NLMC" : "not-NLMC";
}

std::string PointClassification::regular_label() const {
  return indeterminate ? "indeterminate" : strongly_regular ? "strongly-regular" : "not";
}

std::vector<PointClassification> classify(const CompactSet& set, const Gauge& gauge,
                                          const std::vector<double>& radii, const PolarOptions& opts) {
  if (set.empty()) return {};
  check_schedule(set, radii);
  TWOGAUGE_REQUIRE(opts.threshold > 0.0, "classify: threshold must be positive");
  const auto K = kernel_matrix(set, gauge, opts.kernel_theta);
  std::vector<PointClassification> out(set.size());
  const int workers = std::max(1, opts.workers);
  auto run = [&](int w) {
    for (std::size_t i = static_cast<std::size_t>(w); i < set.size(); i += static_cast<std::size_t>(workers))
      out[i] = classify_node(K, i, radii, opts);
  };
  if (workers == 1) {
    run(0);
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(run, w);
  }
  return out;
}

std::vector<std::size_t> inclusion_violations(const std::vector<PointClassification>& points) {
  std::vector<std::size_t> bad;
  for (const auto& p : points)
    if (p.strongly_regular && !p.nlmc) bad.push_back(p.node);
  return bad;
}

double max_certificate(const std::vector<PointClassification>& points) {
  double m = 0.0;
  for (const auto& p : points)
    for (const auto& r : p.radii)
      if (r.certificate) m = std::max(m, *r.certificate);
  return m;
}

Decomposition decompose(const CompactSet& set, const Gauge& gauge, std::vector<double> radii,
                        const PolarOptions& opts) {
  Decomposition d;
  d.gauge = gauge.descriptor();
  d.threshold = opts.threshold;
  d.resolution = set.resolution();
  d.a1.set_label(set.label() + "/A1");
  d.a2.set_label(set.label() + "/A2");
  if (set.empty()) return d;
  if (radii.empty()) radii = default_radius_schedule(set);
  d.radii = radii;
  d.points = classify(set, gauge, radii, opts);
  std::vector<Cell> c1, c2;
  for (const auto& p : d.points) {
    if (p.indeterminate) d.indeterminate.push_back(p.node);
    (p.nlmc ? c2 : c1).push_back(set[p.node]);
  }
  d.a1 = CompactSet::trusted(std::move(c1), set.label() + "/A1");
  d.a2 = CompactSet::trusted(std::move(c2), set.label() + "/A2");
  if (!d.a2.empty()) d.cap_log_a2 = capacity(d.a2, Gauge::log(), opts.solver, opts.kernel_theta).value;
  return d;
}

nlohmann::json to_json(const Decomposition& d) {
  long nlmc = 0, regular = 0;
  for (const auto& p : d.points) {
    nlmc += p.nlmc;
    regular += p.strongly_regular;
  }
  return {{"gauge", d.gauge},
          {"threshold", d.threshold},
          {"radii", d.radii},
          {"resolution", d.resolution},
          {"cap_log_a2", d.cap_log_a2},
          {"nlmc_nodes", nlmc},
          {"strongly_regular_nodes", regular},
          {"inclusion_violations", inclusion_violations(d.points)},
          {"max_certificate", max_certificate(d.points)},
          {"indeterminate", d.indeterminate},
          {"A1", to_json(d.a1)},
          {"A2", to_json(d.a2)}};
}

std::string classification_csv(const CompactSet& set, const std::vector<PointClassification>& points,
                               const std::vector<double>& radii) {
  std::ostringstream s;
  s.precision(17);
  s << "node,x,y";
  for (std::size_t k = 0; k < radii.size(); ++k) s << ",cap_r" << k + 1;
  s << ",nlmc,strongly_regular\n";
  for (const auto& p : points) {
    const auto& c = set[p.node].center;
    s << p.node << ',' << c.x() << ',' << c.y();
    for (std::size_t k = 0; k < radii.size(); ++k) {
      s << ',';
      if (k < p.radii.size()) s << p.radii[k].martin_cap;
    }
    s << ',' << p.nlmc_label() << ',' << p.regular_label() << '\n';
  }
  return s.str();
}

}  // namespace twogauge
