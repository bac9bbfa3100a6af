#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"
#include "kernel.hpp"

namespace drma {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Upper tail of the chi-square law with one degree of freedom.
inline double chi2_1_upper_tail(double x) {
  if (!(x > 0.0)) return 1.0;
  return std::erfc(std::sqrt(0.5 * x));
}

/// Upper-alpha quantile of chi-square(1), by bisection on the tail.
inline double chi2_1_quantile_upper(double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw numerical_error("alpha must lie in (0, 1]");
  if (alpha == 1.0) return 0.0;
  double lo = 0.0, hi = 1.0;
  while (chi2_1_upper_tail(hi) > alpha) hi *= 2.0;
  for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
    double mid = 0.5 * (lo + hi);
    (chi2_1_upper_tail(mid) > alpha ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

struct TestResult {
  double v_n = 0.0;
  double var_hat = 0.0;
  double t_n = 0.0;
  double t_n_squared = 0.0;
  double p_value = 1.0;
  double h = 0.0;
  int q_hat = 0;
  std::string sdr_method;
  Eigen::Index n = 0;

  // Set when every residual pair has zero kernel-weighted variance, i.e. a
  // perfect fit or no pairs inside the kernel support; then t_n = 0, p = 1.
  bool degenerate = false;
  bool size_adjusted = false;
  double t_n_unadjusted = 0.0;

  // Pipeline echo (filled by drma_test).
  double bandwidth_scale = 0.0;
  bool intercept = false;
  VectorXd beta_hat;
  MatrixXd directions;
  std::vector<double> sdr_eigenvalues;
  std::vector<double> criterion_values;
};

namespace detail {

/// Pairwise sums over i != j of e_i e_j K(d_ij / h) and K^2(d_ij / h) e_i^2 e_j^2,
/// with K the unnormalized-by-h kernel. Points are the rows of `points`.
/// Sums run over i < j in a fixed order and are doubled.
struct PairSums {
  double cross = 0.0;  // sum_{i!=j} e_i e_j K
  double square = 0.0; // sum_{i!=j} K^2 e_i^2 e_j^2
};

inline PairSums pair_sums(const VectorXd& residuals, const MatrixXd& points, double h, const KernelSpec& spec) {
  const Eigen::Index n = residuals.size();
  if (points.rows() != n) throw numerical_error("projected points and residuals differ in length");
  if (points.cols() != spec.arity())
    throw numerical_error("kernel arity " + std::to_string(spec.arity()) + " does not match projection dimension " +
                          std::to_string(points.cols()));
  if (n < 2) throw numerical_error("need n >= 2");
  if (!(h > 0.0)) throw numerical_error("bandwidth must be positive");
  const double inv_h2 = 1.0 / (h * h);
  // row-major copy keeps the inner distance loop contiguous
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> z = points;
  const Eigen::Index q = z.cols();
  PairSums s;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double* zi = z.data() + i * q;
    double cross_i = 0.0, square_i = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double* zj = z.data() + j * q;
      double d2 = 0.0;
      for (Eigen::Index c = 0; c < q; ++c) {
        double d = zi[c] - zj[c];
        d2 += d * d;
      }
      double k = spec.from_squared_norm(d2 * inv_h2);
      if (k == 0.0) continue;
      double ee = residuals(j);
      cross_i += ee * k;
      square_i += ee * ee * k * k;
    }
    s.cross += residuals(i) * cross_i;
    s.square += residuals(i) * residuals(i) * square_i;
  }
  s.cross *= 2.0;
  s.square *= 2.0;
  return s;
}

inline TestResult standardized_result(const PairSums& s, Eigen::Index n, int q, double h) {
  TestResult r;
  const double nn = static_cast<double>(n) * static_cast<double>(n - 1);
  const double hq = std::pow(h, q);
  r.v_n = s.cross / (nn * hq);
  r.var_hat = 2.0 * s.square / (nn * hq);
  r.h = h;
  r.q_hat = q;
  r.n = n;
  if (!(s.square > 0.0)) {
    r.degenerate = true;
    r.t_n = 0.0;
    r.t_n_squared = 0.0;
    r.p_value = 1.0;
  } else {
    r.t_n = std::pow(h, 0.5 * (1.0 - q)) * s.cross / std::sqrt(2.0 * s.square);
    r.t_n_squared = r.t_n * r.t_n;
    r.p_value = chi2_1_upper_tail(r.t_n_squared);
  }
  r.t_n_unadjusted = r.t_n;
  return r;
}

} // namespace detail

/// V_n = [n(n-1)]^{-1} sum_{i != j} e_i e_j K_h(z_i - z_j), K_h(u) = K(u/h)/h^q.
inline double v_n_statistic(const VectorXd& residuals, const MatrixXd& projected, double h, const KernelSpec& spec) {
  auto s = detail::pair_sums(residuals, projected, h, spec);
  const double n = static_cast<double>(residuals.size());
  return s.cross / (n * (n - 1.0) * std::pow(h, spec.arity()));
}

/// Var-hat = 2[n(n-1)]^{-1} sum_{i != j} h^{-q} K^2((z_i - z_j)/h) e_i^2 e_j^2.
inline double var_hat_statistic(const VectorXd& residuals, const MatrixXd& projected, double h,
                                const KernelSpec& spec) {
  auto s = detail::pair_sums(residuals, projected, h, spec);
  const double n = static_cast<double>(residuals.size());
  return 2.0 * s.square / (n * (n - 1.0) * std::pow(h, spec.arity()));
}

/// Studentized statistic T_n with its chi-square(1) p-value for T_n^2.
/// Degenerate (zero Var-hat) input yields T_n = 0, p = 1 and `degenerate`.
inline TestResult t_n_statistic(const VectorXd& residuals, const MatrixXd& projected, double h,
                                const KernelSpec& spec) {
  auto s = detail::pair_sums(residuals, projected, h, spec);
  return detail::standardized_result(s, residuals.size(), spec.arity(), h);
}

/// Zheng's classical statistic: the same construction on the full predictor
/// with a p-dimensional kernel. A non-positive `h` selects 1.5 n^{-1/(4+p)}.
inline TestResult zheng_statistic(const VectorXd& residuals, const MatrixXd& x, double h = 0.0) {
  const auto p = x.cols();
  if (!(h > 0.0)) h = bandwidth_rule(x.rows(), p);
  KernelSpec spec(static_cast<int>(p));
  auto r = t_n_statistic(residuals, x, h, spec);
  r.sdr_method = "ZHENG";
  return r;
}

/// T_n / (1 + 4 n^{-4/5}).
inline double mave_size_adjust(double t_n, Eigen::Index n) {
  if (n < 1) throw numerical_error("size adjustment needs n >= 1");
  return t_n / (1.0 + 4.0 * std::pow(static_cast<double>(n), -0.8));
}

/// Apply the size adjustment to a result, recomputing T_n^2 and the p-value.
inline TestResult size_adjusted(TestResult r) {
  r.t_n_unadjusted = r.t_n;
  r.t_n = mave_size_adjust(r.t_n, r.n);
  r.t_n_squared = r.t_n * r.t_n;
  r.p_value = r.degenerate ? 1.0 : chi2_1_upper_tail(r.t_n_squared);
  r.size_adjusted = true;
  return r;
}

struct SmoothedResiduals {
  VectorXd index;                       // B^T x_i
  VectorXd conditional_mean;            // leave-one-out Nadaraya-Watson E(e | B^T x_i); NaN where undefined
  VectorXd density;                     // leave-one-out kernel density at B^T x_i
  std::vector<bool> defined;
};

/// Leave-one-out kernel regression of the residuals on a one-dimensional index.
inline SmoothedResiduals nw_residual_smoother(const VectorXd& residuals, const VectorXd& index, double h) {
  const Eigen::Index n = residuals.size();
  if (index.size() != n) throw numerical_error("index and residuals differ in length");
  if (n < 2) throw numerical_error("need n >= 2");
  if (!(h > 0.0)) throw numerical_error("bandwidth must be positive");
  KernelSpec k(1);
  SmoothedResiduals out;
  out.index = index;
  out.conditional_mean = VectorXd::Constant(n, std::numeric_limits<double>::quiet_NaN());
  out.density = VectorXd::Zero(n);
  out.defined.assign(static_cast<std::size_t>(n), false);
  for (Eigen::Index i = 0; i < n; ++i) {
    double num = 0.0, den = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      double w = k((index(i) - index(j)) / h) / h;
      num += w * residuals(j);
      den += w;
    }
    out.density(i) = den / static_cast<double>(n - 1);
    if (den > 0.0) {
      out.conditional_mean(i) = num / den;
      out.defined[static_cast<std::size_t>(i)] = true;
    }
  }
  return out;
}

} // namespace drma
