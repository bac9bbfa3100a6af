#pragma once

#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "error.hpp"

namespace drma {

/// Spherical quartic (biweight) kernel c_q (1 - |u|^2)^2 on the unit ball.
/// For q = 1 this is 15/16 (1 - u^2)^2.
class KernelSpec {
public:
  explicit KernelSpec(int arity) : arity_(arity) {
    if (arity < 1) throw numerical_error("kernel arity must be >= 1");
    // integral of (1 - r^2)^2 over the unit q-ball is 2 pi^{q/2} / Gamma(q/2 + 3)
    const double q = arity;
    norm_ = std::exp(std::lgamma(q / 2.0 + 3.0)) / (2.0 * std::pow(std::numbers::pi, q / 2.0));
  }

  int arity() const noexcept { return arity_; }
  double normalizing_constant() const noexcept { return norm_; }

  /// Kernel value at squared norm |u|^2.
  double from_squared_norm(double u2) const noexcept {
    if (!(u2 < 1.0)) return 0.0;
    double t = 1.0 - u2;
    return norm_ * t * t;
  }

  template <class Derived>
  double operator()(const Eigen::MatrixBase<Derived>& u) const {
    if (u.size() != arity_)
      throw numerical_error("kernel arity " + std::to_string(arity_) + " does not match argument length " +
                            std::to_string(u.size()));
    return from_squared_norm(u.squaredNorm());
  }

  double operator()(double u) const {
    if (arity_ != 1) throw numerical_error("scalar kernel argument needs arity 1");
    return from_squared_norm(u * u);
  }

private:
  int arity_;
  double norm_;
};

inline double kernel_eval(const KernelSpec& spec, const Eigen::VectorXd& u) { return spec(u); }

/// h = c * n^{-1/(4+q)}.
inline double bandwidth_rule(Eigen::Index n, Eigen::Index q, double c = 1.5) {
  if (n < 2) throw numerical_error("bandwidth rule needs n >= 2");
  if (q < 1) throw numerical_error("bandwidth rule needs q >= 1");
  if (!(c > 0.0)) throw numerical_error("bandwidth scale must be positive");
  return c * std::pow(static_cast<double>(n), -1.0 / (4.0 + static_cast<double>(q)));
}

} // namespace drma
