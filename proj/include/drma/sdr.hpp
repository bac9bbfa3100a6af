#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"

namespace drma {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Estimated basis of the central mean subspace.
struct SdrEstimate {
  MatrixXd directions;                 // p x q_hat, orthonormal, sign-fixed
  VectorXd eigenvalues;                // non-increasing spectrum (empty for MAVE)
  int q_hat = 0;
  std::string method;                  // DEE-SIR, DEE-SAVE or MAVE
  std::vector<double> criterion_values; // G(l) for DEE, BIC_k for MAVE, l,k = 1..p
  bool degenerate = false;
};

/// Flip each column so that its entry of largest magnitude is positive.
/// Exact ties in magnitude go to the first such entry.
inline MatrixXd sign_fix(MatrixXd b) {
  for (Eigen::Index c = 0; c < b.cols(); ++c) {
    Eigen::Index arg = 0;
    double best = -1.0;
    for (Eigen::Index r = 0; r < b.rows(); ++r) {
      if (std::abs(b(r, c)) > best) {
        best = std::abs(b(r, c));
        arg = r;
      }
    }
    if (b(arg, c) < 0.0) b.col(c) *= -1.0;
  }
  return b;
}

/// Orthonormal basis whose leading j columns span the leading j columns of `b`.
inline MatrixXd orthonormalize(const MatrixXd& b) {
  if (b.cols() == 0) return b;
  if (!b.allFinite()) throw numerical_error("cannot orthonormalize a non-finite basis");
  Eigen::HouseholderQR<MatrixXd> qr(b);
  MatrixXd q = qr.householderQ() * MatrixXd::Identity(b.rows(), b.cols());
  // keep the orientation of the input columns
  const MatrixXd r = qr.matrixQR().topRows(b.cols()).triangularView<Eigen::Upper>();
  for (Eigen::Index c = 0; c < b.cols(); ++c)
    if (r(c, c) < 0.0) q.col(c) *= -1.0;
  return q;
}

/// Principal angles (radians, non-decreasing) between the column spans of
/// two matrices, which are orthonormalized first.
inline VectorXd principal_angles(const MatrixXd& a, const MatrixXd& b) {
  if (a.rows() != b.rows()) throw numerical_error("principal angles need equal ambient dimensions");
  MatrixXd qa = orthonormalize(a), qb = orthonormalize(b);
  Eigen::JacobiSVD<MatrixXd> svd(qa.transpose() * qb);
  VectorXd s = svd.singularValues();
  VectorXd out(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) out(i) = std::acos(std::clamp(s(i), -1.0, 1.0));
  std::sort(out.data(), out.data() + out.size());
  return out;
}

inline double largest_principal_angle(const MatrixXd& a, const MatrixXd& b) {
  VectorXd ang = principal_angles(a, b);
  if (ang.size() == 0) return 0.0;
  // the smaller basis limits the count; a rank gap counts as a right angle
  double worst = ang.maxCoeff();
  if (a.cols() != b.cols()) worst = std::acos(0.0);
  return worst;
}

namespace detail {

/// Symmetric inverse square root of a symmetric positive definite matrix
/// after adding `ridge` to the diagonal.
inline MatrixXd inverse_sqrt(const MatrixXd& sigma, double ridge) {
  if (!sigma.allFinite()) throw numerical_error("covariance has non-finite entries");
  MatrixXd s = 0.5 * (sigma + sigma.transpose());
  s.diagonal().array() += ridge;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(s);
  if (es.info() != Eigen::Success) throw numerical_error("eigen-decomposition of the covariance failed");
  const VectorXd& ev = es.eigenvalues();
  if (!(ev.minCoeff() > 0.0)) throw numerical_error("covariance is singular after ridge inflation");
  return es.eigenvectors() * ev.cwiseSqrt().cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
}

struct Spectrum {
  VectorXd values;  // non-increasing
  MatrixXd vectors; // matching columns
};

inline Spectrum descending_spectrum(const MatrixXd& m) {
  if (!m.allFinite()) throw numerical_error("candidate matrix has non-finite entries");
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (m + m.transpose()));
  if (es.info() != Eigen::Success) throw numerical_error("symmetric eigen-decomposition failed");
  Spectrum s;
  s.values = es.eigenvalues().reverse();
  s.vectors = es.eigenvectors().rowwise().reverse();
  return s;
}

} // namespace detail

} // namespace drma
