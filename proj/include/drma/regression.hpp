#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dataset.hpp"
#include "error.hpp"

namespace drma {

/// Parametric link g(u, theta) of the single index u = beta^T x.
///
/// `derivative` is dg/du and `theta_gradient` is dg/dtheta (length d); the
/// gradient of the mean with respect to (beta, theta) is then
/// m(x, beta, theta) = (dg/du * x, dg/dtheta).
struct LinkSpec {
  std::string name;
  int d = 0;
  std::function<double(double, const VectorXd&)> evaluate;
  std::function<double(double, const VectorXd&)> derivative;
  std::function<VectorXd(double, const VectorXd&)> theta_gradient;
  bool linear = false;

  VectorXd gradient(const VectorXd& x, const VectorXd& beta, const VectorXd& theta) const {
    const double u = x.dot(beta);
    VectorXd m(x.size() + d);
    m.head(x.size()) = derivative(u, theta) * x;
    if (d > 0) m.tail(d) = theta_gradient(u, theta);
    return m;
  }

  double mean(const VectorXd& x, const VectorXd& beta, const VectorXd& theta) const {
    return evaluate(x.dot(beta), theta);
  }

  /// g = u (+ theta when intercept).
  static LinkSpec identity(bool intercept) {
    LinkSpec l;
    l.name = intercept ? "linear+intercept" : "linear";
    l.d = intercept ? 1 : 0;
    l.linear = true;
    l.evaluate = [intercept](double u, const VectorXd& th) { return intercept ? u + th(0) : u; };
    l.derivative = [](double, const VectorXd&) { return 1.0; };
    l.theta_gradient = [](double, const VectorXd&) { return VectorXd::Ones(1); };
    return l;
  }

  /// g = u^2.
  static LinkSpec quadratic() {
    LinkSpec l;
    l.name = "quadratic";
    l.evaluate = [](double u, const VectorXd&) { return u * u; };
    l.derivative = [](double u, const VectorXd&) { return 2.0 * u; };
    l.theta_gradient = [](double, const VectorXd&) { return VectorXd(0); };
    return l;
  }
};

/// Largest relative discrepancy between the analytic gradient and central
/// finite differences of the mean, over all (beta, theta) coordinates.
inline double gradient_check(const LinkSpec& link, const VectorXd& x, const VectorXd& beta, const VectorXd& theta,
                             double step = 1e-6) {
  const VectorXd analytic = link.gradient(x, beta, theta);
  const Eigen::Index p = beta.size();
  double worst = 0.0;
  for (Eigen::Index k = 0; k < analytic.size(); ++k) {
    VectorXd bp = beta, bm = beta, tp = theta, tm = theta;
    if (k < p) {
      bp(k) += step;
      bm(k) -= step;
    } else {
      tp(k - p) += step;
      tm(k - p) -= step;
    }
    double fd = (link.mean(x, bp, tp) - link.mean(x, bm, tm)) / (2.0 * step);
    double scale = std::max({1.0, std::abs(fd), std::abs(analytic(k))});
    worst = std::max(worst, std::abs(fd - analytic(k)) / scale);
  }
  return worst;
}

struct FittedNullModel {
  VectorXd beta_hat;
  VectorXd theta_hat;   // length d
  VectorXd fitted;      // g(beta_hat^T x_i, theta_hat)
  VectorXd residuals;   // y_i - fitted_i
  MatrixXd sigma_x_hat; // n^{-1} sum m m^T at the estimate
  bool converged = true;
  int iterations = 0;
  std::vector<double> rss_history;
};

struct LinkGradients {
  MatrixXd m;           // row i = m(x_i, beta_hat, theta_hat)
  MatrixXd sigma_x_hat; // n^{-1} sum_i m_i m_i^T
};

inline LinkGradients link_gradient_matrix(const MatrixXd& x, const VectorXd& beta, const VectorXd& theta,
                                          const LinkSpec& link) {
  LinkGradients g;
  g.m.resize(x.rows(), x.cols() + link.d);
  for (Eigen::Index i = 0; i < x.rows(); ++i) g.m.row(i) = link.gradient(x.row(i).transpose(), beta, theta).transpose();
  g.sigma_x_hat = g.m.transpose() * g.m / static_cast<double>(x.rows());
  g.sigma_x_hat = 0.5 * (g.sigma_x_hat + g.sigma_x_hat.transpose()).eval();
  return g;
}

inline LinkGradients link_gradient_matrix(const Dataset& data, const FittedNullModel& fit, const LinkSpec& link) {
  return link_gradient_matrix(data.x(), fit.beta_hat, fit.theta_hat, link);
}

namespace detail {

inline constexpr double max_condition_number = 1e10;

inline double condition_number(const MatrixXd& a) {
  Eigen::JacobiSVD<MatrixXd> svd(a);
  const auto& s = svd.singularValues();
  if (s.size() == 0 || !(s(s.size() - 1) > 0.0)) return std::numeric_limits<double>::infinity();
  return s(0) / s(s.size() - 1);
}

} // namespace detail

/// Least squares fit of y on x (plus a constant when `intercept`), the
/// constant being the single theta component.
inline FittedNullModel fit_ols(const Dataset& data, bool intercept) {
  const Eigen::Index n = data.n(), p = data.p();
  MatrixXd design(n, p + (intercept ? 1 : 0));
  design.leftCols(p) = data.x();
  if (intercept) design.col(p).setOnes();
  if (design.rows() < design.cols())
    throw numerical_error("rank-deficient design: " + std::to_string(n) + " rows for " +
                          std::to_string(design.cols()) + " parameters");
  if (detail::condition_number(design) >= detail::max_condition_number)
    throw numerical_error("rank-deficient design (condition number >= 1e10)");
  VectorXd coef = design.colPivHouseholderQr().solve(data.y());
  FittedNullModel fit;
  fit.beta_hat = coef.head(p);
  fit.theta_hat = intercept ? VectorXd(coef.tail(1)) : VectorXd(0);
  fit.fitted = design * coef;
  fit.residuals = data.y() - fit.fitted;
  fit.sigma_x_hat = design.transpose() * design / static_cast<double>(n);
  fit.converged = true;
  fit.iterations = 1;
  fit.rss_history = {fit.residuals.squaredNorm()};
  return fit;
}

/// Gauss-Newton with step halving. Stops when the relative decrease of the
/// residual sum of squares drops below 1e-10, or after 100 iterations.
inline FittedNullModel fit_nls(const Dataset& data, const LinkSpec& link, const VectorXd& init,
                               int max_iterations = 100, double rel_tol = 1e-10) {
  const Eigen::Index n = data.n(), p = data.p(), np = p + link.d;
  if (init.size() != np)
    throw numerical_error("initial parameter has length " + std::to_string(init.size()) + ", expected " +
                          std::to_string(np));
  if (!init.allFinite()) throw numerical_error("initial parameter is not finite");

  auto residuals_at = [&](const VectorXd& gamma) {
    VectorXd beta = gamma.head(p), theta = gamma.tail(link.d);
    VectorXd r(n);
    for (Eigen::Index i = 0; i < n; ++i) r(i) = data.y()(i) - link.mean(data.x().row(i).transpose(), beta, theta);
    return r;
  };

  VectorXd gamma = init;
  VectorXd r = residuals_at(gamma);
  double rss = r.squaredNorm();
  if (!std::isfinite(rss)) throw numerical_error("objective is not finite at the initial value");

  FittedNullModel fit;
  fit.rss_history.push_back(rss);
  fit.converged = false;
  int it = 0;
  while (it < max_iterations) {
    ++it;
    auto grads = link_gradient_matrix(data.x(), gamma.head(p), gamma.tail(link.d), link);
    const MatrixXd& jac = grads.m;
    MatrixXd normal = jac.transpose() * jac;
    if (detail::condition_number(normal) >= detail::max_condition_number * detail::max_condition_number ||
        !normal.allFinite())
      throw numerical_error("singular Gauss-Newton normal matrix (flat gradient directions)");
    VectorXd step = normal.ldlt().solve(jac.transpose() * r);

    double scale = 1.0;
    VectorXd candidate;
    VectorXd r_new;
    double rss_new = std::numeric_limits<double>::infinity();
    for (int halvings = 0; halvings < 40; ++halvings) {
      candidate = gamma + scale * step;
      r_new = residuals_at(candidate);
      rss_new = r_new.squaredNorm();
      if (std::isfinite(rss_new) && rss_new <= rss) break;
      scale *= 0.5;
    }
    if (!(std::isfinite(rss_new) && rss_new <= rss)) {
      // no descent along the Gauss-Newton direction: stationary to working precision
      fit.converged = true;
      break;
    }
    const double decrease = rss - rss_new;
    gamma = candidate;
    r = r_new;
    rss = rss_new;
    fit.rss_history.push_back(rss);
    if (decrease <= rel_tol * std::max(rss + decrease, std::numeric_limits<double>::min())) {
      fit.converged = true;
      break;
    }
  }
  fit.iterations = it;
  fit.beta_hat = gamma.head(p);
  fit.theta_hat = gamma.tail(link.d);
  fit.residuals = r;
  fit.fitted = data.y() - r;
  fit.sigma_x_hat = link_gradient_matrix(data.x(), fit.beta_hat, fit.theta_hat, link).sigma_x_hat;
  return fit;
}

/// Fit the null model, using exact least squares for the identity link.
inline FittedNullModel fit_null_model(const Dataset& data, const LinkSpec& link, const VectorXd& init = {}) {
  if (link.linear) return fit_ols(data, link.d == 1);
  VectorXd start = init;
  if (start.size() == 0) {
    auto ols = fit_ols(data, false);
    start = VectorXd::Zero(data.p() + link.d);
    start.head(data.p()) = ols.beta_hat;
  }
  return fit_nls(data, link, start);
}

} // namespace drma
