#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <vector>

namespace twogauge::detail {

/// Linear convolution of node weights on an nx-by-ny lattice with a radial
/// offset kernel, by zero padding to a 2-3-5 smooth periodic grid.
class LatticeConvolver {
 public:
  /// `offset_value(a, b)` gives the kernel at lattice offset (a, b), a, b >= 0.
  LatticeConvolver(std::vector<std::int32_t> gx, std::vector<std::int32_t> gy, int nx, int ny,
                   const std::function<double(std::int64_t, std::int64_t)>& offset_value);
  ~LatticeConvolver();
  LatticeConvolver(const LatticeConvolver&) = delete;
  LatticeConvolver& operator=(const LatticeConvolver&) = delete;

  /// Kernel times w (node-indexed).
  Eigen::VectorXd apply(const Eigen::VectorXd& w) const { return run(w, symbol_); }
  /// Inverse of the periodic kernel operator; positive definite when the
  /// symbol is positive.
  Eigen::VectorXd apply_inverse(const Eigen::VectorXd& r) const { return run(r, inverse_symbol_); }
  bool invertible() const { return invertible_; }

 private:
  Eigen::VectorXd run(const Eigen::VectorXd& w, const Eigen::VectorXd& multiplier) const;

  std::vector<std::int32_t> gx_, gy_;
  int nx_, ny_, mx_, my_;
  void* forward_ = nullptr;  // fftw plans
  void* backward_ = nullptr;
  Eigen::VectorXd symbol_, inverse_symbol_;  // half spectrum, mx * (my/2 + 1)
  bool invertible_ = false;
};

int smooth_size(int n);

}  // namespace twogauge::detail
