#include "lattice_fft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <memory>
#include <mutex>

namespace twogauge::detail {

namespace {

// Planning is not thread safe in FFTW; execution is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};
using RealBuffer = std::unique_ptr<double[], FftwFree>;
using ComplexBuffer = std::unique_ptr<fftw_complex[], FftwFree>;

RealBuffer real_buffer(std::size_t n) { return RealBuffer(fftw_alloc_real(n)); }
ComplexBuffer complex_buffer(std::size_t n) { return ComplexBuffer(fftw_alloc_complex(n)); }

}  // namespace

int smooth_size(int n) {
  for (int m = std::max(n, 1);; ++m) {
    int r = m;
    for (int p : {2, 3, 5})
      while (r % p == 0) r /= p;
    if (r == 1) return m;
  }
}

// Grids are stored x-major: entry (x, y) at x * my + y, spectra at x * (my/2 + 1) + k.
LatticeConvolver::LatticeConvolver(std::vector<std::int32_t> gx, std::vector<std::int32_t> gy, int nx,
                                   int ny,
                                   const std::function<double(std::int64_t, std::int64_t)>& offset_value)
    : gx_(std::move(gx)), gy_(std::move(gy)), nx_(nx), ny_(ny) {
  mx_ = smooth_size(std::max(2 * nx_ - 1, 2));
  my_ = smooth_size(std::max(2 * ny_ - 1, 2));
  const auto cells = static_cast<std::size_t>(mx_) * static_cast<std::size_t>(my_);
  const auto half = static_cast<std::size_t>(mx_) * static_cast<std::size_t>(my_ / 2 + 1);
  auto g = real_buffer(cells);
  auto s = complex_buffer(half);
  {
    // ESTIMATE plans do not depend on timing, so results are reproducible.
    std::lock_guard lock(planner_mutex());
    forward_ = fftw_plan_dft_r2c_2d(mx_, my_, g.get(), s.get(), FFTW_ESTIMATE);
    backward_ = fftw_plan_dft_c2r_2d(mx_, my_, s.get(), g.get(), FFTW_ESTIMATE);
  }
  for (int x = 0; x < mx_; ++x)
    for (int y = 0; y < my_; ++y)
      g[static_cast<std::size_t>(x) * my_ + y] = offset_value(std::min(x, mx_ - x), std::min(y, my_ - y));
  fftw_execute_dft_r2c(static_cast<fftw_plan>(forward_), g.get(), s.get());
  // The periodic kernel is even, so its spectrum is real. The 1 / (mx my)
  // normalisation of the unnormalised inverse transform is folded in here.
  const double scale = 1.0 / static_cast<double>(cells);
  symbol_.resize(static_cast<Eigen::Index>(half));
  for (std::size_t i = 0; i < half; ++i) symbol_[static_cast<Eigen::Index>(i)] = s[i][0];
  invertible_ = symbol_.minCoeff() > 0.0;
  if (invertible_) inverse_symbol_ = symbol_.cwiseInverse() * scale;
  symbol_ *= scale;
}

LatticeConvolver::~LatticeConvolver() {
  std::lock_guard lock(planner_mutex());
  fftw_destroy_plan(static_cast<fftw_plan>(forward_));
  fftw_destroy_plan(static_cast<fftw_plan>(backward_));
}

Eigen::VectorXd LatticeConvolver::run(const Eigen::VectorXd& w, const Eigen::VectorXd& multiplier) const {
  const auto cells = static_cast<std::size_t>(mx_) * static_cast<std::size_t>(my_);
  const auto half = static_cast<std::size_t>(multiplier.size());
  auto g = real_buffer(cells);
  auto s = complex_buffer(half);
  std::fill(g.get(), g.get() + cells, 0.0);
  for (std::size_t i = 0; i < gx_.size(); ++i)
    g[static_cast<std::size_t>(gx_[i]) * my_ + gy_[i]] = w[static_cast<Eigen::Index>(i)];
  fftw_execute_dft_r2c(static_cast<fftw_plan>(forward_), g.get(), s.get());
  for (std::size_t i = 0; i < half; ++i) {
    const double m = multiplier[static_cast<Eigen::Index>(i)];
    s[i][0] *= m;
    s[i][1] *= m;
  }
  fftw_execute_dft_c2r(static_cast<fftw_plan>(backward_), s.get(), g.get());
  Eigen::VectorXd r(w.size());
  for (std::size_t i = 0; i < gx_.size(); ++i)
    r[static_cast<Eigen::Index>(i)] = g[static_cast<std::size_t>(gx_[i]) * my_ + gy_[i]];
  return r;
}

}  // namespace twogauge::detail
