#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dataset.hpp"
#include "error.hpp"
#include "kernel.hpp"
#include "sdr.hpp"

namespace drma {

enum class MaveInit { opg, identity };

/// Which residual sum of squares feeds the BIC.
/// leave_one_out: sum_j (y_j - a_j^{(-j)})^2 from local fits without the anchor.
/// in_sample: the kernel-weighted local linear RSS of the fit itself.
enum class SelectionRss { leave_one_out, in_sample };

struct MaveConfig {
  int max_outer_iterations = 50;
  double tolerance = 1e-6; // largest principal angle between successive iterates
  double bandwidth_scale = 3.0; // c in h_k = c n^{-1/(4+k)}
  MaveInit init = MaveInit::opg;
  SelectionRss selection_rss = SelectionRss::leave_one_out;
  double ridge = 1e-8;

  void validate() const {
    if (max_outer_iterations < 1) throw numerical_error("MAVE needs max_outer_iterations >= 1");
    if (!(tolerance > 0.0)) throw numerical_error("MAVE tolerance must be positive");
    if (!(bandwidth_scale > 0.0)) throw numerical_error("MAVE bandwidth scale must be positive");
    if (!(ridge >= 0.0)) throw numerical_error("MAVE ridge must be non-negative");
  }
};

struct MaveFit {
  MatrixXd directions;        // p x k
  double rss = 0.0;           // sum_j sum_i w_ij r_ij^2 with sum_i w_ij = 1
  VectorXd local_intercepts;  // a_j
  MatrixXd local_slopes;      // row j = d_j^T
  bool converged = false;
  int iterations = 0;
  std::vector<double> rss_history;
  Eigen::Index degenerate_anchors = 0; // anchors with fewer than k+1 points in the window
  double h = 0.0;
};

namespace detail {

struct Neighbour {
  Eigen::Index index;
  double weight;
};

struct LocalFits {
  VectorXd intercepts;
  MatrixXd slopes;
  std::vector<std::vector<Neighbour>> windows; // per anchor, normalized weights
  double rss = 0.0;
  Eigen::Index degenerate = 0;
};

/// Kernel windows in projected coordinates z = x B. Weights are normalized
/// per anchor; `include_self` decides whether the anchor itself takes part.
inline std::vector<std::vector<Neighbour>> kernel_windows(const MatrixXd& z, double h, bool include_self) {
  const Eigen::Index n = z.rows();
  KernelSpec kernel(static_cast<int>(z.cols()));
  const double inv_h2 = 1.0 / (h * h);
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> zr = z;
  const Eigen::Index k = z.cols();
  std::vector<std::vector<Neighbour>> out(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < n; ++j) {
    auto& win = out[static_cast<std::size_t>(j)];
    double total = 0.0;
    const double* zj = zr.data() + j * k;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (i == j && !include_self) continue;
      const double* zi = zr.data() + i * k;
      double d2 = 0.0;
      for (Eigen::Index c = 0; c < k; ++c) d2 += (zi[c] - zj[c]) * (zi[c] - zj[c]);
      double w = kernel.from_squared_norm(d2 * inv_h2);
      if (w > 0.0) {
        win.push_back({i, w});
        total += w;
      }
    }
    for (auto& nb : win) nb.weight /= total;
  }
  return out;
}

/// Weighted local linear fit of y on (1, z_i - z_j); returns (a, d).
inline VectorXd local_linear(const MatrixXd& z, const VectorXd& y, Eigen::Index anchor,
                             const std::vector<Neighbour>& window, double ridge) {
  const Eigen::Index k = z.cols();
  MatrixXd gram = MatrixXd::Zero(k + 1, k + 1);
  VectorXd rhs = VectorXd::Zero(k + 1);
  VectorXd row(k + 1);
  for (const auto& nb : window) {
    row(0) = 1.0;
    row.tail(k) = (z.row(nb.index) - z.row(anchor)).transpose();
    gram.selfadjointView<Eigen::Lower>().rankUpdate(row, nb.weight);
    rhs += nb.weight * y(nb.index) * row;
  }
  gram = gram.selfadjointView<Eigen::Lower>();
  gram.diagonal().array() += ridge;
  return gram.ldlt().solve(rhs);
}

inline LocalFits local_fits(const MatrixXd& x, const VectorXd& y, const MatrixXd& basis, double h, double ridge) {
  const Eigen::Index n = x.rows(), k = basis.cols();
  const MatrixXd z = x * basis;
  LocalFits f;
  f.windows = kernel_windows(z, h, true);
  f.intercepts.resize(n);
  f.slopes.resize(n, k);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& win = f.windows[static_cast<std::size_t>(j)];
    if (static_cast<Eigen::Index>(win.size()) < k + 1) ++f.degenerate;
    VectorXd coef = local_linear(z, y, j, win, ridge);
    f.intercepts(j) = coef(0);
    f.slopes.row(j) = coef.tail(k).transpose();
    for (const auto& nb : win) {
      double r = y(nb.index) - coef(0) - coef.tail(k).dot((z.row(nb.index) - z.row(j)).transpose());
      f.rss += nb.weight * r * r;
    }
  }
  if (!std::isfinite(f.rss)) throw numerical_error("MAVE local fits produced a non-finite residual sum");
  return f;
}

/// Minimize over B the weighted sum for fixed local coefficients and windows.
inline MatrixXd solve_basis(const MatrixXd& x, const VectorXd& y, const LocalFits& f, Eigen::Index k, double ridge) {
  const Eigen::Index n = x.rows(), p = x.cols();
  MatrixXd normal = MatrixXd::Zero(p * k, p * k);
  VectorXd rhs = VectorXd::Zero(p * k);
  MatrixXd s(p, p);
  VectorXd r(p), diff(p);
  for (Eigen::Index j = 0; j < n; ++j) {
    s.setZero();
    r.setZero();
    for (const auto& nb : f.windows[static_cast<std::size_t>(j)]) {
      diff = (x.row(nb.index) - x.row(j)).transpose();
      s.selfadjointView<Eigen::Lower>().rankUpdate(diff, nb.weight);
      r += nb.weight * (y(nb.index) - f.intercepts(j)) * diff;
    }
    s = s.selfadjointView<Eigen::Lower>();
    const VectorXd d = f.slopes.row(j).transpose();
    for (Eigen::Index a = 0; a < k; ++a) {
      rhs.segment(a * p, p) += d(a) * r;
      for (Eigen::Index b = 0; b < k; ++b) normal.block(a * p, b * p, p, p) += (d(a) * d(b)) * s;
    }
  }
  normal.diagonal().array() += ridge;
  VectorXd vec_b = normal.ldlt().solve(rhs);
  if (!vec_b.allFinite()) throw numerical_error("MAVE basis update is not finite");
  return Eigen::Map<const MatrixXd>(vec_b.data(), p, k);
}

inline double mave_bandwidth(Eigen::Index n, Eigen::Index k, double c) { return bandwidth_rule(n, k, c); }

} // namespace detail

/// Outer-product-of-gradients directions: eigenvectors (non-increasing
/// eigenvalue order) of n^{-1} sum_j b_j b_j^T, b_j the local linear gradient
/// at x_j. Each anchor uses max(rule bandwidth, distance to its (2p+2)-th
/// nearest neighbour) so that the p-dimensional local fit is identified.
inline MatrixXd opg_directions(const Dataset& data, const MaveConfig& config) {
  const Eigen::Index n = data.n(), p = data.p();
  const MatrixXd& x = data.x();
  const double rule = bandwidth_rule(n, p, config.bandwidth_scale);
  const Eigen::Index rank = std::min<Eigen::Index>(2 * p + 2, n - 1);
  KernelSpec kernel(static_cast<int>(p));
  MatrixXd outer = MatrixXd::Zero(p, p);
  std::vector<double> dist(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) dist[static_cast<std::size_t>(i)] = (x.row(i) - x.row(j)).squaredNorm();
    std::vector<double> sorted = dist;
    std::nth_element(sorted.begin(), sorted.begin() + rank, sorted.end());
    const double hj = std::max(rule, std::sqrt(sorted[static_cast<std::size_t>(rank)]) * 1.0001);
    const double inv_h2 = 1.0 / (hj * hj);
    MatrixXd gram = MatrixXd::Zero(p + 1, p + 1);
    VectorXd rhs = VectorXd::Zero(p + 1), row(p + 1);
    for (Eigen::Index i = 0; i < n; ++i) {
      double w = kernel.from_squared_norm(dist[static_cast<std::size_t>(i)] * inv_h2);
      if (w == 0.0) continue;
      row(0) = 1.0;
      row.tail(p) = (x.row(i) - x.row(j)).transpose();
      gram.selfadjointView<Eigen::Lower>().rankUpdate(row, w);
      rhs += w * data.y()(i) * row;
    }
    gram = gram.selfadjointView<Eigen::Lower>();
    gram.diagonal().array() += config.ridge;
    VectorXd coef = gram.ldlt().solve(rhs);
    if (!coef.allFinite()) throw numerical_error("OPG local fit is not finite");
    outer += coef.tail(p) * coef.tail(p).transpose();
  }
  return detail::descending_spectrum(outer / static_cast<double>(n)).vectors;
}

/// Alternating minimization of sum_j sum_i (y_i - a_j - d_j^T B^T (x_i - x_j))^2 w_ij.
/// `start` overrides the initial basis (its first k columns are used).
inline MaveFit mave_fit(const Dataset& data, Eigen::Index k, const MaveConfig& config,
                        const std::optional<MatrixXd>& start = std::nullopt) {
  config.validate();
  const Eigen::Index n = data.n(), p = data.p();
  if (k < 1 || k > p) throw numerical_error("MAVE dimension k must lie in [1, p]");
  const MatrixXd& x = data.x();
  const VectorXd& y = data.y();
  MaveFit fit;
  fit.h = detail::mave_bandwidth(n, k, config.bandwidth_scale);

  MatrixXd basis;
  if (k == p) {
    basis = MatrixXd::Identity(p, p);
  } else if (start) {
    if (start->rows() != p || start->cols() < k) throw numerical_error("MAVE start basis has the wrong shape");
    basis = orthonormalize(start->leftCols(k));
  } else if (config.init == MaveInit::opg) {
    try {
      basis = orthonormalize(opg_directions(data, config).leftCols(k));
    } catch (const error&) {
      basis = MatrixXd::Identity(p, k);
    }
  } else {
    basis = MatrixXd::Identity(p, k);
  }

  auto current = detail::local_fits(x, y, basis, fit.h, config.ridge);
  fit.rss_history.push_back(current.rss);
  if (k == p) {
    fit.converged = true;
  } else {
    for (int it = 0; it < config.max_outer_iterations; ++it) {
      fit.iterations = it + 1;
      MatrixXd target = orthonormalize(detail::solve_basis(x, y, current, k, config.ridge));
      // backtrack toward the current basis until the profile RSS does not increase
      std::optional<detail::LocalFits> accepted;
      MatrixXd next;
      double step = 1.0;
      for (int tries = 0; tries < 6; ++tries, step *= 0.5) {
        // align the target with the current basis before blending
        Eigen::JacobiSVD<MatrixXd> svd(target.transpose() * basis, Eigen::ComputeFullU | Eigen::ComputeFullV);
        MatrixXd aligned = target * (svd.matrixU() * svd.matrixV().transpose());
        next = orthonormalize(basis + step * (aligned - basis));
        auto trial = detail::local_fits(x, y, next, fit.h, config.ridge);
        if (trial.rss <= current.rss) {
          accepted = std::move(trial);
          break;
        }
      }
      if (!accepted) {
        fit.converged = true; // no descent left along the update direction
        break;
      }
      const double angle = largest_principal_angle(basis, next);
      basis = next;
      current = std::move(*accepted);
      fit.rss_history.push_back(current.rss);
      if (angle < config.tolerance) {
        fit.converged = true;
        break;
      }
    }
  }
  fit.directions = sign_fix(basis);
  if (fit.directions != basis) current = detail::local_fits(x, y, fit.directions, fit.h, config.ridge);
  fit.rss = current.rss;
  fit.local_intercepts = current.intercepts;
  fit.local_slopes = current.slopes;
  fit.degenerate_anchors = current.degenerate;
  return fit;
}

/// sum_j sum_i W(j, i) (y_i - a_j - d_j^T B^T (x_i - x_j))^2 for an explicit weight matrix.
inline double mave_weighted_rss(const Dataset& data, const MatrixXd& basis, const VectorXd& intercepts,
                                const MatrixXd& slopes, const MatrixXd& weights) {
  const Eigen::Index n = data.n();
  const MatrixXd z = data.x() * basis;
  double total = 0.0;
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i) {
      if (weights(j, i) == 0.0) continue;
      double r = data.y()(i) - intercepts(j) - slopes.row(j).dot(z.row(i) - z.row(j));
      total += weights(j, i) * r * r;
    }
  return total;
}

/// Normalized kernel weights W(j, i) = K(|z_i - z_j| / h) / sum_l K(|z_l - z_j| / h).
inline MatrixXd mave_weights(const Dataset& data, const MatrixXd& basis, double h) {
  const auto windows = detail::kernel_windows(data.x() * basis, h, true);
  MatrixXd w = MatrixXd::Zero(data.n(), data.n());
  for (Eigen::Index j = 0; j < data.n(); ++j)
    for (const auto& nb : windows[static_cast<std::size_t>(j)]) w(j, nb.index) = nb.weight;
  return w;
}

/// In-sample weighted RSS of a fit, recomputed at its bandwidth.
inline double mave_rss(const Dataset& data, const MaveFit& fit, const MaveConfig& /*config*/) {
  return mave_weighted_rss(data, fit.directions, fit.local_intercepts, fit.local_slopes,
                           mave_weights(data, fit.directions, fit.h));
}

/// Leave-one-out predictive RSS sum_j (y_j - a_j^{(-j)})^2. Anchors whose
/// window holds fewer than 4(k+1) other points widen it to reach their
/// 4(k+1)-th nearest neighbour.
inline double mave_cv_rss(const Dataset& data, const MatrixXd& basis, double h, double ridge = 1e-8) {
  const Eigen::Index n = data.n(), k = basis.cols();
  if (n < 2) throw numerical_error("leave-one-out RSS needs n >= 2");
  const MatrixXd z = data.x() * basis;
  const VectorXd& y = data.y();
  const auto windows = detail::kernel_windows(z, h, false);
  const Eigen::Index need = std::min<Eigen::Index>(4 * (k + 1), n - 1);
  KernelSpec kernel(static_cast<int>(k));
  std::vector<double> dist;
  double cv = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& win = windows[static_cast<std::size_t>(j)];
    double pred;
    if (static_cast<Eigen::Index>(win.size()) >= need) {
      pred = detail::local_linear(z, y, j, win, ridge)(0);
    } else {
      dist.clear();
      for (Eigen::Index i = 0; i < n; ++i)
        if (i != j) dist.push_back((z.row(i) - z.row(j)).squaredNorm());
      std::nth_element(dist.begin(), dist.begin() + (need - 1), dist.end());
      const double hj = std::sqrt(dist[static_cast<std::size_t>(need - 1)]) * 1.0001;
      std::vector<detail::Neighbour> wide;
      double total = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (i == j) continue;
        const double w = kernel.from_squared_norm((z.row(i) - z.row(j)).squaredNorm() / (hj * hj));
        if (w > 0.0) {
          wide.push_back({i, w});
          total += w;
        }
      }
      if (wide.empty()) {
        pred = (y.sum() - y(j)) / static_cast<double>(n - 1);
      } else {
        for (auto& nb : wide) nb.weight /= total;
        pred = detail::local_linear(z, y, j, wide, ridge)(0);
      }
    }
    cv += (y(j) - pred) * (y(j) - pred);
  }
  return cv;
}

struct BicValues {
  std::vector<double> bic;
  bool clamped = false;
};

/// BIC_k = log(RSS_k / n) + log(n) k / min(n h_k^k, sqrt(n)), h_k = c n^{-1/(4+k)}.
/// RSS_k is clamped at 1e-12 n.
inline BicValues mave_bic(const std::vector<double>& rss, Eigen::Index n, double c = 1.5) {
  BicValues out;
  const double nd = static_cast<double>(n);
  for (std::size_t i = 0; i < rss.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i + 1);
    double value = rss[i];
    if (!(value >= 1e-12 * nd)) {
      value = 1e-12 * nd;
      out.clamped = true;
    }
    const double h = bandwidth_rule(n, k, c);
    const double denom = std::min(nd * std::pow(h, static_cast<double>(k)), std::sqrt(nd));
    out.bic.push_back(std::log(value / nd) + std::log(nd) * static_cast<double>(k) / denom);
  }
  return out;
}

/// Smallest minimizer (1-based).
inline int smallest_argmin(const std::vector<double>& values) {
  if (values.empty()) throw numerical_error("argmin of an empty criterion");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] < values[best]) best = i;
  return static_cast<int>(best) + 1;
}

struct MaveSelection {
  int q_hat = 1;
  std::vector<double> bic;
  std::vector<double> selection_rss;
  std::vector<MaveFit> fits; // k = 1..p
  bool clamped = false;
};

inline MaveSelection mave_select_q(const Dataset& data, const MaveConfig& config) {
  config.validate();
  const Eigen::Index p = data.p();
  MaveSelection sel;
  std::optional<MatrixXd> start;
  if (config.init == MaveInit::opg && p > 1) {
    try {
      start = opg_directions(data, config);
    } catch (const error&) {
      start.reset();
    }
  }
  MaveConfig inner = config;
  if (!start) inner.init = MaveInit::identity;
  for (Eigen::Index k = 1; k <= p; ++k) {
    auto fit = mave_fit(data, k, inner, start);
    sel.selection_rss.push_back(config.selection_rss == SelectionRss::leave_one_out
                                    ? mave_cv_rss(data, fit.directions, fit.h, config.ridge)
                                    : fit.rss);
    sel.fits.push_back(std::move(fit));
  }
  auto bic = mave_bic(sel.selection_rss, data.n(), config.bandwidth_scale);
  sel.bic = std::move(bic.bic);
  sel.clamped = bic.clamped;
  sel.q_hat = smallest_argmin(sel.bic);
  return sel;
}

inline SdrEstimate mave_estimate(const Dataset& data, const MaveConfig& config) {
  SdrEstimate est;
  est.method = "MAVE";
  if (data.p() == 1) {
    config.validate();
    est.q_hat = 1;
    est.directions = MatrixXd::Ones(1, 1);
    est.criterion_values = {0.0};
    return est;
  }
  auto sel = mave_select_q(data, config);
  est.q_hat = sel.q_hat;
  est.directions = sel.fits[static_cast<std::size_t>(sel.q_hat - 1)].directions;
  est.criterion_values = sel.bic;
  est.degenerate = sel.clamped;
  return est;
}

} // namespace drma
