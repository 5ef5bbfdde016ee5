#include "twogauge/gauges.hpp"

#include "twogauge/error.hpp"
#include "lattice_fft.hpp"

#include <algorithm>
#include <charconv>
#include <limits>
#include <numbers>
#include <optional>

namespace twogauge {

namespace {

std::string format_real(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc{} ? std::string(buf, end) : std::to_string(v);
}

double parse_real(std::string_view s, const char* what) {
  double v = 0.0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size())
    throw PreconditionError(std::string("cannot parse ") + what + " from '" + std::string(s) + "'");
  return v;
}

double inverse_log_base(double base) {
  if (base == 0.0) return 1.0;
  TWOGAUGE_REQUIRE(base > 1.0 && std::isfinite(base), "logarithm base must exceed 1");
  return 1.0 / std::log(base);
}

std::string base_suffix(double inv_log_base) {
  if (inv_log_base == 1.0) return {};
  return "@" + format_real(std::exp(1.0 / inv_log_base));
}

}  // namespace

Gauge Gauge::log(double base) {
  Gauge g;
  g.kind_ = Kind::Log;
  g.inv_log_base_ = inverse_log_base(base);
  return g;
}

Gauge Gauge::log_squared(double base) {
  Gauge g;
  g.kind_ = Kind::LogSquared;
  g.inv_log_base_ = inverse_log_base(base);
  return g;
}

Gauge Gauge::power(double alpha) {
  TWOGAUGE_REQUIRE(alpha > 0.0 && std::isfinite(alpha), "power gauge exponent must be positive");
  Gauge g;
  g.kind_ = Kind::Power;
  g.alpha_ = alpha;
  return g;
}

Gauge Gauge::hybrid(const Gauge& f, const Gauge& g, double eps) {
  TWOGAUGE_REQUIRE(eps > 0.0 && eps < 1.0, "hybrid knee must lie in (0, 1)");
  // f <= g on (0, eps], checked on a log-spaced grid down to 30 decades below the knee
  for (int k = 0; k <= 600; ++k) {
    const double r = eps * std::pow(10.0, -0.05 * k);
    const double fr = f.value(r), gr = g.value(r);
    if (fr > gr * (1.0 + 1e-12))
      throw PreconditionError("hybrid gauge requires f <= g below the knee; fails at r = " +
                              format_real(r));
  }
  Gauge h;
  h.kind_ = Kind::Hybrid;
  h.eps_ = eps;
  h.f_ = std::make_shared<const Gauge>(f);
  h.g_ = std::make_shared<const Gauge>(g);
  h.knee_scale_ = f.value(eps) / g.value(eps);
  return h;
}

Gauge Gauge::parse(std::string_view d) {
  auto with_base = [](std::string_view head, std::string_view s, bool squared) -> std::optional<Gauge> {
    if (s.substr(0, head.size()) != head) return std::nullopt;
    const auto rest = s.substr(head.size());
    if (rest.empty()) return squared ? log_squared() : log();
    if (rest.front() != '@') return std::nullopt;
    const double b = parse_real(rest.substr(1), "logarithm base");
    return squared ? log_squared(b) : log(b);
  };
  if (d.starts_with("hyb:")) {
    auto body = d.substr(4);
    const auto colon = body.rfind(':');
    if (colon == std::string_view::npos) throw PreconditionError("hybrid descriptor needs ':<eps>'");
    const double eps = parse_real(body.substr(colon + 1), "hybrid knee");
    body = body.substr(0, colon);
    std::size_t arrow = body.find("->");
    std::size_t arrow_len = 2;
    if (arrow == std::string_view::npos) {
      arrow = body.find("\xE2\x86\x92");
      arrow_len = 3;
    }
    if (arrow == std::string_view::npos) throw PreconditionError("hybrid descriptor needs 'f->g'");
    return hybrid(parse(body.substr(0, arrow)), parse(body.substr(arrow + arrow_len)), eps);
  }
  if (d.starts_with("pow:")) return power(parse_real(d.substr(4), "power exponent"));
  if (d.starts_with("log2")) {
    if (auto g = with_base("log2", d, true)) return *g;
  } else if (auto g = with_base("log", d, false)) {
    return *g;
  }
  throw PreconditionError("unknown gauge descriptor '" + std::string(d) + "'");
}

double Gauge::operator()(double r) const {
  if (!(r > 0.0 && r < 1.0))
    throw PreconditionError("gauge argument must lie in (0, 1), got " + format_real(r));
  return value(r);
}

std::string Gauge::descriptor() const {
  switch (kind_) {
    case Kind::Log: return "log" + base_suffix(inv_log_base_);
    case Kind::LogSquared: return "log2" + base_suffix(inv_log_base_);
    case Kind::Power: return "pow:" + format_real(alpha_);
    case Kind::Hybrid:
      return "hyb:" + f_->descriptor() + "\xE2\x86\x92" + g_->descriptor() + ":" + format_real(eps_);
  }
  return {};
}

// ---------------------------------------------------------------------------

namespace {

constexpr double kLatticeSlack = 1e-9;
constexpr std::size_t kMaxTable = std::size_t{1} << 25;
constexpr Eigen::Index kConvolveAbove = 64;

double max_center_distance(const std::vector<Node>& nodes) {
  std::vector<Point> pts;
  pts.reserve(nodes.size());
  for (const auto& n : nodes) pts.push_back(n.x);
  std::sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() <= 2) return pts.size() == 2 ? (pts[0] - pts[1]).norm() : 0.0;
  auto cross = [](const Point& o, const Point& a, const Point& b) {
    return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
  };
  std::vector<Point> h(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(h[k - 2], h[k - 1], p) <= 0) --k;
    h[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(h[k - 2], h[k - 1], pts[i]) <= 0) --k;
    h[k++] = pts[i];
  }
  h.resize(k - 1);
  double best = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i)
    for (std::size_t j = i + 1; j < h.size(); ++j) best = std::max(best, (h[i] - h[j]).norm());
  return best;
}

}  // namespace

KernelMatrix::KernelMatrix(std::vector<Node> nodes, Gauge gauge, double theta, std::size_t dense_limit)
    : nodes_(std::move(nodes)),
      gauge_(std::make_shared<const Gauge>(std::move(gauge))),
      theta_(theta),
      description_(gauge_->descriptor()) {
  TWOGAUGE_REQUIRE(!nodes_.empty(), "kernel matrix needs at least one node");
  TWOGAUGE_REQUIRE(theta_ > 0.0 && theta_ <= 1.0, "diagonal theta must lie in (0, 1]");
  const auto n = nodes_.size();

  diag_.resize(n);
  for (std::size_t i = 0; i < n; ++i) diag_[i] = (*gauge_)(theta_ * nodes_[i].diameter);

  const bool small = n <= dense_limit;
  if (small) {
    storage_ = Storage::Dense;
    dense_.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t j = 0; j < n; ++j) {
      dense_(j, j) = diag_[j];
      for (std::size_t i = j + 1; i < n; ++i) {
        const double v = gauge_->value((nodes_[i].x - nodes_[j].x).norm());
        dense_(i, j) = v;
        dense_(j, i) = v;
      }
    }
  } else {
    storage_ = Storage::Implicit;
  }

  // Uniform lattice detection: identical diameters and centers on a common grid.
  const double d0 = nodes_[0].diameter;
  const bool uniform = std::all_of(nodes_.begin(), nodes_.end(),
                                   [&](const Node& v) { return v.diameter == d0; });
  if (n < 2 || !uniform || d0 <= 0.0) return;
  // candidate steps: the side of a square cell, or the length of a segment cell
  for (const double step : {d0 / std::numbers::sqrt2, d0})
    if (build_lattice(step, !small)) return;
}

bool KernelMatrix::build_lattice(double step, bool with_table) {
  const auto n = nodes_.size();
  const Point origin = nodes_[0].x;
  std::vector<std::int32_t> ix(n), iy(n);
  std::int32_t lo_x = 0, hi_x = 0, lo_y = 0, hi_y = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double ux = (nodes_[i].x.x() - origin.x()) / step;
    const double uy = (nodes_[i].x.y() - origin.y()) / step;
    const double rx = std::round(ux), ry = std::round(uy);
    if (std::abs(ux - rx) > kLatticeSlack || std::abs(uy - ry) > kLatticeSlack ||
        std::abs(rx) > 1e9 || std::abs(ry) > 1e9)
      return false;
    ix[i] = static_cast<std::int32_t>(rx);
    iy[i] = static_cast<std::int32_t>(ry);
    lo_x = std::min(lo_x, ix[i]);
    hi_x = std::max(hi_x, ix[i]);
    lo_y = std::min(lo_y, iy[i]);
    hi_y = std::max(hi_y, iy[i]);
  }
  const std::int64_t max_dx = hi_x - lo_x, max_dy = hi_y - lo_y;
  const auto entries = static_cast<std::size_t>((max_dx + 1) * (max_dy + 1));
  if (entries > kMaxTable) return false;

  const double far = step * std::hypot(double(max_dx), double(max_dy));
  auto offset_value = [&](std::int64_t a, std::int64_t b) {
    if (a == 0 && b == 0) return diag_[0];
    return gauge_->value(std::min(step * std::hypot(double(a), double(b)), far));
  };
  if (with_table) {
    table_stride_ = max_dy + 1;
    table_.resize(entries);
    for (std::int64_t a = 0; a <= max_dx; ++a)
      for (std::int64_t b = 0; b <= max_dy; ++b)
        table_[static_cast<std::size_t>(a * table_stride_ + b)] = offset_value(a, b);
    storage_ = Storage::Lattice;
  }
  std::vector<std::int32_t> gx(n), gy(n);
  for (std::size_t i = 0; i < n; ++i) {
    gx[i] = ix[i] - lo_x;
    gy[i] = iy[i] - lo_y;
  }
  conv_ = std::make_shared<const detail::LatticeConvolver>(
      std::move(gx), std::move(gy), static_cast<int>(max_dx + 1), static_cast<int>(max_dy + 1),
      offset_value);
  ix_ = std::move(ix);
  iy_ = std::move(iy);
  return true;
}

KernelMatrix::KernelMatrix(std::vector<Node> nodes, Eigen::MatrixXd entries, std::string description)
    : nodes_(std::move(nodes)), storage_(Storage::Dense), description_(std::move(description)),
      dense_(std::move(entries)) {
  TWOGAUGE_REQUIRE(!nodes_.empty(), "kernel matrix needs at least one node");
  TWOGAUGE_REQUIRE(dense_.rows() == size() && dense_.cols() == size(),
                   "kernel entries do not match the node count");
  diag_.resize(nodes_.size());
  for (Eigen::Index i = 0; i < size(); ++i) diag_[static_cast<std::size_t>(i)] = dense_(i, i);
}

double KernelMatrix::entry_unchecked(Eigen::Index i, Eigen::Index j) const {
  switch (storage_) {
    case Storage::Dense: return dense_(i, j);
    case Storage::Lattice: {
      const auto a = std::abs(std::int64_t{ix_[i]} - ix_[j]);
      const auto b = std::abs(std::int64_t{iy_[i]} - iy_[j]);
      return table_[static_cast<std::size_t>(a * table_stride_ + b)];
    }
    case Storage::Implicit:
      return i == j ? diag_[static_cast<std::size_t>(i)]
                    : gauge_->value((nodes_[i].x - nodes_[j].x).norm());
  }
  return 0.0;
}

double KernelMatrix::operator()(Eigen::Index i, Eigen::Index j) const {
  if (i < 0 || j < 0 || i >= size() || j >= size()) throw PreconditionError("kernel index out of range");
  return entry_unchecked(i, j);
}

void KernelMatrix::column(Eigen::Index j, Eigen::Ref<Eigen::VectorXd> out) const {
  out.setZero();
  add_column(j, 1.0, out);
}

void KernelMatrix::add_column(Eigen::Index j, double scale, Eigen::Ref<Eigen::VectorXd> out) const {
  const Eigen::Index n = size();
  switch (storage_) {
    case Storage::Dense:
      out.noalias() += scale * dense_.col(j);
      return;
    case Storage::Lattice: {
      const std::int32_t xj = ix_[j], yj = iy_[j];
      const double* t = table_.data();
      const std::int64_t s = table_stride_;
      for (Eigen::Index i = 0; i < n; ++i) {
        const std::int64_t a = std::abs(ix_[i] - xj), b = std::abs(iy_[i] - yj);
        out[i] += scale * t[a * s + b];
      }
      return;
    }
    case Storage::Implicit: {
      const Point xj = nodes_[j].x;
      for (Eigen::Index i = 0; i < n; ++i)
        out[i] += scale * (i == j ? diag_[static_cast<std::size_t>(j)]
                                  : gauge_->value((nodes_[i].x - xj).norm()));
      return;
    }
  }
}

Eigen::VectorXd KernelMatrix::apply(const Eigen::VectorXd& w) const {
  TWOGAUGE_REQUIRE(w.size() == size(), "weight vector does not match the kernel size");
  if (storage_ == Storage::Dense) return dense_ * w;
  const auto nnz = (w.array() != 0.0).count();
  if (conv_ && nnz > kConvolveAbove) return conv_->apply(w);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(size());
  for (Eigen::Index j = 0; j < size(); ++j)
    if (w[j] != 0.0) add_column(j, w[j], out);
  return out;
}

Eigen::VectorXd KernelMatrix::apply_columns(std::span<const Eigen::Index> idx,
                                            const Eigen::VectorXd& w_sub) const {
  TWOGAUGE_REQUIRE(static_cast<Eigen::Index>(idx.size()) == w_sub.size(),
                   "column subset and weights differ in length");
  if (storage_ != Storage::Dense && conv_ && static_cast<Eigen::Index>(idx.size()) > kConvolveAbove) {
    Eigen::VectorXd w = Eigen::VectorXd::Zero(size());
    for (std::size_t k = 0; k < idx.size(); ++k) w[idx[k]] = w_sub[static_cast<Eigen::Index>(k)];
    return conv_->apply(w);
  }
  Eigen::VectorXd out = Eigen::VectorXd::Zero(size());
  for (std::size_t k = 0; k < idx.size(); ++k)
    if (w_sub[static_cast<Eigen::Index>(k)] != 0.0)
      add_column(idx[k], w_sub[static_cast<Eigen::Index>(k)], out);
  return out;
}

bool KernelMatrix::has_preconditioner() const { return conv_ && conv_->invertible(); }

Eigen::VectorXd KernelMatrix::apply_preconditioner(const Eigen::VectorXd& r) const {
  TWOGAUGE_REQUIRE(has_preconditioner(), "kernel has no lattice preconditioner");
  return conv_->apply_inverse(r);
}

Eigen::MatrixXd KernelMatrix::block(std::span<const Eigen::Index> idx) const {
  const auto m = static_cast<Eigen::Index>(idx.size());
  Eigen::MatrixXd b(m, m);
  for (Eigen::Index c = 0; c < m; ++c) {
    b(c, c) = entry_unchecked(idx[c], idx[c]);
    for (Eigen::Index r = c + 1; r < m; ++r) {
      const double v = entry_unchecked(idx[r], idx[c]);
      b(r, c) = v;
      b(c, r) = v;
    }
  }
  return b;
}

Eigen::MatrixXd KernelMatrix::to_dense() const {
  if (storage_ == Storage::Dense) return dense_;
  std::vector<Eigen::Index> all(nodes_.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<Eigen::Index>(i);
  return block(all);
}

KernelMatrix kernel_matrix(const CompactSet& set, const Gauge& gauge, double theta) {
  TWOGAUGE_REQUIRE(!set.empty(), "kernel matrix needs a nonempty set");
  auto nodes = centers(set);
  for (std::size_t i = 1; i < nodes.size(); ++i)
    if (nodes[i].x == nodes[i - 1].x) throw PreconditionError("duplicate node centers");
  if (max_center_distance(nodes) >= 1.0)
    throw PreconditionError("node distances must stay below 1");
  return KernelMatrix(std::move(nodes), gauge, theta);
}

double MartinKernel::operator()(const Point& x, const Point& y) const {
  if (y == xi_) throw PreconditionError("Martin kernel evaluated at y = xi");
  if (x == y) throw PreconditionError("Martin kernel evaluated at x = y");
  return gauge_((x - y).norm()) / gauge_((xi_ - y).norm());
}

MartinKernel martin_kernel(const Gauge& gauge, const Point& xi) { return MartinKernel(gauge, xi); }

}  // namespace twogauge
