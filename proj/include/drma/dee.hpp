#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dataset.hpp"
#include "error.hpp"
#include "sdr.hpp"

namespace drma {

enum class DeeFlavor { sir, save };

inline std::string to_string(DeeFlavor f) { return f == DeeFlavor::sir ? "DEE-SIR" : "DEE-SAVE"; }

struct DeeConfig {
  DeeFlavor flavor = DeeFlavor::sir;
  std::optional<double> d_n; // penalty constant; sqrt(n) when unset
  double ridge = 1e-8;

  void validate() const {
    if (d_n && !(*d_n > 0.0)) throw numerical_error("DEE penalty constant d_n must be positive");
    if (!(ridge >= 0.0)) throw numerical_error("DEE ridge must be non-negative");
  }
  double penalty(Eigen::Index n) const { return d_n ? *d_n : std::sqrt(static_cast<double>(n)); }
};

/// L(t) = m(t) m(t)^T with m(t) = n^{-1} sum_i (x_i - xbar) 1{y_i <= t}.
inline MatrixXd dee_candidate_sir(const Dataset& data, const SampleMoments& moments, double t) {
  const Eigen::Index n = data.n();
  VectorXd m = VectorXd::Zero(data.p());
  for (Eigen::Index i = 0; i < n; ++i)
    if (data.y()(i) <= t) m += data.x().row(i).transpose() - moments.mean;
  m /= static_cast<double>(n);
  return m * m.transpose();
}

/// Slice-variance candidate sum_s p_s (I - Var(Xs | Z(t) = s))^2 on predictors
/// standardized by the ridged covariance; nullopt when a slice has fewer than
/// two points.
inline std::optional<MatrixXd> dee_candidate_save(const Dataset& data, const SampleMoments& moments, double t,
                                                  double ridge = 1e-8) {
  const Eigen::Index n = data.n(), p = data.p();
  const MatrixXd root = detail::inverse_sqrt(moments.covariance, ridge);
  const MatrixXd z = (data.x().rowwise() - moments.mean.transpose()) * root;
  std::vector<Eigen::Index> low, high;
  for (Eigen::Index i = 0; i < n; ++i) (data.y()(i) <= t ? low : high).push_back(i);
  if (low.size() < 2 || high.size() < 2) return std::nullopt;
  MatrixXd out = MatrixXd::Zero(p, p);
  for (const auto* slice : {&low, &high}) {
    const double size = static_cast<double>(slice->size());
    VectorXd mean = VectorXd::Zero(p);
    for (auto i : *slice) mean += z.row(i).transpose();
    mean /= size;
    MatrixXd var = MatrixXd::Zero(p, p);
    for (auto i : *slice) {
      VectorXd d = z.row(i).transpose() - mean;
      var += d * d.transpose();
    }
    var /= size;
    MatrixXd gap = MatrixXd::Identity(p, p) - var;
    out += (size / static_cast<double>(n)) * gap * gap;
  }
  return out;
}

/// Same slice formula given the two slice variances directly.
inline MatrixXd save_slice_formula(const MatrixXd& var_low, const MatrixXd& var_high, double p_low) {
  const auto p = var_low.rows();
  MatrixXd g0 = MatrixXd::Identity(p, p) - var_low, g1 = MatrixXd::Identity(p, p) - var_high;
  return p_low * g0 * g0 + (1.0 - p_low) * g1 * g1;
}

struct DeeAggregate {
  MatrixXd matrix;      // averaged candidate (SIR: original coordinates, SAVE: standardized)
  VectorXd eigenvalues; // non-increasing spectrum of the standardized problem
  MatrixXd directions;  // p x p, back-mapped, orthonormalized, sign-fixed
  Eigen::Index thresholds_used = 0;
  Eigen::Index thresholds_skipped = 0;
};

namespace detail {

/// Positions of sorted responses, grouped so that every tie block ends at
/// the last index with the same value.
struct SortedResponse {
  std::vector<Eigen::Index> order;
  std::vector<Eigen::Index> block_end; // block_end[r] = last sorted rank sharing y with rank r
};

inline SortedResponse sort_response(const VectorXd& y) {
  SortedResponse s;
  s.order.resize(static_cast<std::size_t>(y.size()));
  std::iota(s.order.begin(), s.order.end(), Eigen::Index{0});
  std::stable_sort(s.order.begin(), s.order.end(), [&](auto a, auto b) { return y(a) < y(b); });
  const auto n = s.order.size();
  s.block_end.resize(n);
  for (std::size_t r = n; r-- > 0;)
    s.block_end[r] = (r + 1 < n && y(s.order[r]) == y(s.order[r + 1])) ? s.block_end[r + 1] : static_cast<Eigen::Index>(r);
  return s;
}

} // namespace detail

/// Average of the candidate matrices over t = y_1, ..., y_n and its spectrum.
/// Cumulative sums over the sorted response make this O(n p^2) for SIR and
/// O(n p^3) for SAVE.
inline DeeAggregate dee_aggregate(const Dataset& data, const DeeConfig& config) {
  config.validate();
  const Eigen::Index n = data.n(), p = data.p();
  if (n < 3) throw numerical_error("DEE needs n >= 3");
  const SampleMoments moments = sample_moments(data);
  const MatrixXd root = detail::inverse_sqrt(moments.covariance, config.ridge);
  const auto sorted = detail::sort_response(data.y());
  const double nd = static_cast<double>(n);
  DeeAggregate agg;

  detail::Spectrum spec;
  if (config.flavor == DeeFlavor::sir) {
    // prefix[r] = sum of centered x over sorted ranks 0..r
    MatrixXd prefix(n, p);
    VectorXd run = VectorXd::Zero(p);
    for (Eigen::Index r = 0; r < n; ++r) {
      run += data.x().row(sorted.order[static_cast<std::size_t>(r)]).transpose() - moments.mean;
      prefix.row(r) = run.transpose();
    }
    MatrixXd m(n, p); // row j = m(y_j), one per observation
    for (Eigen::Index r = 0; r < n; ++r) m.row(r) = prefix.row(sorted.block_end[static_cast<std::size_t>(r)]) / nd;
    agg.matrix = m.transpose() * m / nd;
    agg.matrix = 0.5 * (agg.matrix + agg.matrix.transpose()).eval();
    agg.thresholds_used = n;
    spec = detail::descending_spectrum(root * agg.matrix * root);
  } else {
    const MatrixXd z = (data.x().rowwise() - moments.mean.transpose()) * root;
    const VectorXd total_sum = z.colwise().sum().transpose();
    const MatrixXd total_outer = z.transpose() * z;
    VectorXd sum = VectorXd::Zero(p);
    MatrixXd outer = MatrixXd::Zero(p, p);
    MatrixXd acc = MatrixXd::Zero(p, p);
    const MatrixXd eye = MatrixXd::Identity(p, p);
    auto slice_gap = [&](const VectorXd& s, const MatrixXd& o, double size) {
      VectorXd mean = s / size;
      MatrixXd g = eye - (o / size - mean * mean.transpose());
      return MatrixXd(g * g);
    };
    Eigen::Index r = 0;
    while (r < n) {
      const Eigen::Index end = sorted.block_end[static_cast<std::size_t>(r)];
      for (Eigen::Index k = r; k <= end; ++k) {
        auto row = z.row(sorted.order[static_cast<std::size_t>(k)]).transpose();
        sum += row;
        outer += row * row.transpose();
      }
      const Eigen::Index block = end - r + 1;
      const Eigen::Index low = end + 1, high = n - low;
      if (low >= 2 && high >= 2) {
        MatrixXd cand = (static_cast<double>(low) / nd) * slice_gap(sum, outer, static_cast<double>(low)) +
                        (static_cast<double>(high) / nd) *
                            slice_gap(total_sum - sum, total_outer - outer, static_cast<double>(high));
        // every observation in the tie block yields the same threshold
        acc += static_cast<double>(block) * cand;
        agg.thresholds_used += block;
      } else {
        agg.thresholds_skipped += block;
      }
      r = end + 1;
    }
    if (agg.thresholds_used == 0) throw numerical_error("every DEE-SAVE threshold has a slice with fewer than 2 points");
    agg.matrix = acc / static_cast<double>(agg.thresholds_used);
    agg.matrix = 0.5 * (agg.matrix + agg.matrix.transpose()).eval();
    spec = detail::descending_spectrum(agg.matrix);
  }

  agg.eigenvalues = spec.values;
  agg.directions = sign_fix(orthonormalize(root * spec.vectors));
  return agg;
}

struct DimensionSelection {
  int q_hat = 1;
  std::vector<double> criterion_values; // index l-1
  bool degenerate = false;
};

/// q_hat = argmax_l (n/2) sum_{i<=l} (log(lambda_i+1) - lambda_i) / sum_{i<=p} (...)
///               - 2 d_n l(l+1) / (2p), ties to the smallest l.
inline DimensionSelection dee_select_q(const VectorXd& eigenvalues, Eigen::Index n, const DeeConfig& config) {
  config.validate();
  const Eigen::Index p = eigenvalues.size();
  if (p < 1) throw numerical_error("dimension selection needs at least one eigenvalue");
  for (Eigen::Index i = 1; i < p; ++i)
    if (eigenvalues(i) > eigenvalues(i - 1)) throw numerical_error("eigenvalues must be sorted non-increasing");
  std::vector<double> terms(static_cast<std::size_t>(p));
  double total = 0.0;
  for (Eigen::Index i = 0; i < p; ++i) {
    const double lam = std::max(0.0, eigenvalues(i));
    terms[static_cast<std::size_t>(i)] = std::log1p(lam) - lam;
    total += terms[static_cast<std::size_t>(i)];
  }
  DimensionSelection sel;
  if (total == 0.0) {
    sel.degenerate = true;
    sel.q_hat = 1;
  }
  const double dn = config.penalty(n), pd = static_cast<double>(p);
  double partial = 0.0;
  double best = -std::numeric_limits<double>::infinity();
  for (Eigen::Index l = 1; l <= p; ++l) {
    partial += terms[static_cast<std::size_t>(l - 1)];
    const double ratio = sel.degenerate ? 0.0 : partial / total;
    const double ld = static_cast<double>(l);
    const double g = 0.5 * static_cast<double>(n) * ratio - 2.0 * dn * ld * (ld + 1.0) / (2.0 * pd);
    sel.criterion_values.push_back(g);
    if (!sel.degenerate && g > best) {
      best = g;
      sel.q_hat = static_cast<int>(l);
    }
  }
  return sel;
}

/// Aggregate, select q_hat and return the leading q_hat directions.
inline SdrEstimate dee_estimate(const Dataset& data, const DeeConfig& config) {
  auto agg = dee_aggregate(data, config);
  auto sel = dee_select_q(agg.eigenvalues.cwiseMax(0.0), data.n(), config);
  SdrEstimate est;
  est.q_hat = sel.q_hat;
  est.directions = agg.directions.leftCols(sel.q_hat);
  est.eigenvalues = agg.eigenvalues;
  est.method = to_string(config.flavor);
  est.criterion_values = std::move(sel.criterion_values);
  est.degenerate = sel.degenerate;
  return est;
}

} // namespace drma
