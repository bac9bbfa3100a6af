#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bootstrap.hpp"
#include "dataset.hpp"
#include "error.hpp"
#include "parallel.hpp"
#include "pipeline.hpp"
#include "regression.hpp"
#include "rng.hpp"

namespace drma {

enum class Study { h11, h12, h13, study2, study3 };
enum class SigmaKind { identity, ar_half };
enum class ErrorLaw { normal, laplace };

inline std::string to_string(Study s) {
  switch (s) {
  case Study::h11: return "H11";
  case Study::h12: return "H12";
  case Study::h13: return "H13";
  case Study::study2: return "STUDY2";
  case Study::study3: return "STUDY3";
  }
  return "?";
}
inline std::string to_string(SigmaKind s) { return s == SigmaKind::identity ? "1" : "2"; }
inline std::string to_string(ErrorLaw e) { return e == ErrorLaw::normal ? "normal" : "laplace"; }

inline Study parse_study(const std::string& s) {
  if (s == "H11" || s == "h11") return Study::h11;
  if (s == "H12" || s == "h12") return Study::h12;
  if (s == "H13" || s == "h13") return Study::h13;
  if (s == "STUDY2" || s == "study2" || s == "2") return Study::study2;
  if (s == "STUDY3" || s == "study3" || s == "3") return Study::study3;
  throw data_error("unknown study '" + s + "'");
}
inline SigmaKind parse_sigma(const std::string& s) {
  if (s == "1" || s == "identity") return SigmaKind::identity;
  if (s == "2" || s == "ar" || s == "ar-half") return SigmaKind::ar_half;
  throw data_error("unknown sigma kind '" + s + "'");
}
inline ErrorLaw parse_error_law(const std::string& s) {
  if (s == "normal" || s == "gaussian") return ErrorLaw::normal;
  if (s == "laplace" || s == "de" || s == "double-exponential") return ErrorLaw::laplace;
  throw data_error("unknown error law '" + s + "'");
}

struct StudySpec {
  Study study = Study::h11;
  Eigen::Index p = 8;
  Eigen::Index n = 100;
  double a = 0.0;
  SigmaKind sigma = SigmaKind::identity;
  ErrorLaw error_law = ErrorLaw::normal;
  int replications = 500;
  std::uint64_t seed = 1;
  double alpha = 0.05;

  void validate() const {
    if (!(a >= 0.0)) throw data_error("departure scale a must be >= 0");
    if (replications < 1) throw data_error("replications must be >= 1");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw data_error("alpha must lie in (0, 1]");
    if (n < 3) throw data_error("n must be >= 3");
    switch (study) {
    case Study::h11:
    case Study::h12:
    case Study::h13:
      if (p != 8) throw data_error(to_string(study) + " is defined for p = 8");
      break;
    case Study::study2:
      if (p != 3 && p != 4) throw data_error("STUDY2 requires p in {3, 4}");
      break;
    case Study::study3:
      if (p != 2 && p != 8) throw data_error("STUDY3 requires p in {2, 8}");
      break;
    }
  }
};

inline MatrixXd make_sigma(Eigen::Index p, SigmaKind kind) {
  if (p < 1) throw data_error("sigma needs p >= 1");
  MatrixXd s(p, p);
  for (Eigen::Index j = 0; j < p; ++j)
    for (Eigen::Index l = 0; l < p; ++l)
      s(j, l) = kind == SigmaKind::identity ? (j == l ? 1.0 : 0.0) : std::pow(0.5, static_cast<double>(std::abs(j - l)));
  return s;
}

/// Standard normal, or Laplace with density (sqrt2/2) exp(-sqrt2 |x|) (variance 1).
inline VectorXd sample_error(ErrorLaw law, Eigen::Index count, counter_rng& rng) {
  VectorXd e(count);
  if (law == ErrorLaw::normal) {
    std::normal_distribution<double> dist;
    for (Eigen::Index i = 0; i < count; ++i) e(i) = dist(rng);
  } else {
    const double scale = 1.0 / std::numbers::sqrt2;
    for (Eigen::Index i = 0; i < count; ++i) {
      // inverse CDF on (-1/2, 1/2)
      double u = unit_uniform(rng) - 0.5;
      while (u == -0.5) u = unit_uniform(rng) - 0.5;
      e(i) = -scale * std::copysign(std::log1p(-2.0 * std::abs(u)), u);
    }
  }
  return e;
}

inline VectorXd sample_error(ErrorLaw law, Eigen::Index count, std::uint64_t seed) {
  if (count < 1) throw data_error("error sample needs count >= 1");
  counter_rng rng(seed);
  return sample_error(law, count, rng);
}

/// Rows drawn from N(0, sigma) through the Cholesky factor.
inline MatrixXd sample_gaussian_rows(const MatrixXd& sigma, Eigen::Index n, counter_rng& rng) {
  Eigen::LLT<MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) throw numerical_error("covariance is not positive definite");
  const Eigen::Index p = sigma.rows();
  std::normal_distribution<double> dist;
  MatrixXd z(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j) z(i, j) = dist(rng);
  return z * llt.matrixL().transpose();
}

struct StudyTruth {
  VectorXd beta;  // null-model index
  MatrixXd basis; // true central mean subspace basis
  int q_true = 1;
};

/// Index vectors and the departure function G(x) of each design.
struct StudyDesign {
  VectorXd beta1;
  VectorXd beta2; // empty for Study 1
  std::function<double(const VectorXd&)> departure;
};

inline StudyDesign study_design(const StudySpec& spec) {
  spec.validate();
  const Eigen::Index p = spec.p;
  StudyDesign d;
  switch (spec.study) {
  case Study::h11:
  case Study::h12:
  case Study::h13: {
    d.beta1 = VectorXd::Constant(p, 1.0 / std::sqrt(static_cast<double>(p)));
    const VectorXd b = d.beta1;
    const Study s = spec.study;
    d.departure = [b, s](const VectorXd& x) {
      const double u = b.dot(x);
      if (s == Study::h11) return std::cos(0.6 * std::numbers::pi * u);
      if (s == Study::h12) return std::exp(-u * u);
      return u * u;
    };
    break;
  }
  case Study::study2: {
    d.beta1 = VectorXd::Zero(p);
    d.beta2 = VectorXd::Zero(p);
    if (p == 3) {
      d.beta1(0) = 1.0;
      d.beta2(1) = 1.0;
    } else {
      d.beta1(0) = d.beta1(1) = 1.0 / std::numbers::sqrt2;
      d.beta2(2) = d.beta2(3) = 1.0 / std::numbers::sqrt2;
    }
    const VectorXd b2 = d.beta2;
    d.departure = [b2](const VectorXd& x) {
      const double u = b2.dot(x);
      return u * u * u;
    };
    break;
  }
  case Study::study3: {
    const Eigen::Index half = p / 2;
    const double norm = std::sqrt(static_cast<double>(half));
    d.beta1 = VectorXd::Zero(p);
    d.beta2 = VectorXd::Zero(p);
    d.beta1.head(half).setConstant(1.0 / norm);
    d.beta2.tail(p - half).setConstant(1.0 / norm);
    const VectorXd b2 = d.beta2;
    d.departure = [b2](const VectorXd& x) {
      const double u = b2.dot(x);
      return u * u;
    };
    break;
  }
  }
  return d;
}

struct GeneratedData {
  Dataset data;
  StudyTruth truth;
};

/// Y = beta1^T X + a G(X) + e. Predictors are drawn first, then errors, from
/// one stream, so designs that differ only in a share X and e.
inline GeneratedData generate(const StudySpec& spec, std::uint64_t seed) {
  const StudyDesign design = study_design(spec);
  counter_rng rng(seed);
  MatrixXd x = sample_gaussian_rows(make_sigma(spec.p, spec.sigma), spec.n, rng);
  VectorXd e = sample_error(spec.error_law, spec.n, rng);
  VectorXd y(spec.n);
  for (Eigen::Index i = 0; i < spec.n; ++i) {
    const VectorXd xi = x.row(i).transpose();
    y(i) = design.beta1.dot(xi) + (spec.a > 0.0 ? spec.a * design.departure(xi) : 0.0) + e(i);
  }
  std::vector<std::string> names;
  for (Eigen::Index j = 0; j < spec.p; ++j) names.push_back("x" + std::to_string(j + 1));
  StudyTruth truth;
  truth.beta = design.beta1;
  const bool second = spec.a > 0.0 && design.beta2.size() > 0;
  truth.q_true = second ? 2 : 1;
  truth.basis = MatrixXd(spec.p, truth.q_true);
  truth.basis.col(0) = design.beta1;
  if (second) truth.basis.col(1) = design.beta2;
  return {Dataset(std::move(x), std::move(y), std::move(names)), std::move(truth)};
}

struct MonteCarloMethod {
  TestMethod method = TestMethod::dee_sir;
  int bootstrap = 0; // 0: chi-square calibration
  bool refit_sdr = true;
};

inline std::string to_string(const MonteCarloMethod& m) {
  std::string s = to_string(m.method);
  if (m.bootstrap > 0) s += "-BOOT";
  return s;
}

struct MonteCarloOptions {
  double bandwidth_scale = 1.5;
  bool intercept = false;
  unsigned jobs = 1;
  PipelineConfig pipeline; // method and bandwidth fields are overwritten
};

struct MonteCarloResult {
  StudySpec spec;
  std::string method;
  double bandwidth_scale = 1.5;
  double frequency = 0.0;
  double standard_error = 0.0;
  double mean_q_hat = 0.0;
  int replications = 0; // successful
  int failures = 0;
  std::vector<double> p_values;    // per replicate (NaN on failure)
  std::vector<double> t_n_squared; // per replicate
  std::vector<int> q_hats;         // per replicate (0 on failure)
  std::vector<char> rejected;
};

inline MonteCarloResult run_monte_carlo(const StudySpec& spec, const MonteCarloMethod& method,
                                        const MonteCarloOptions& options = {}) {
  spec.validate();
  const auto reps = static_cast<std::size_t>(spec.replications);
  PipelineConfig config = options.pipeline;
  config.method = method.method;
  config.bandwidth_scale = options.bandwidth_scale;
  const LinkSpec link = LinkSpec::identity(options.intercept);

  MonteCarloResult out;
  out.spec = spec;
  out.method = to_string(method);
  out.bandwidth_scale = options.bandwidth_scale;
  out.p_values.assign(reps, std::numeric_limits<double>::quiet_NaN());
  out.t_n_squared.assign(reps, std::numeric_limits<double>::quiet_NaN());
  out.q_hats.assign(reps, 0);
  out.rejected.assign(reps, 0);
  std::vector<char> failed(reps, 0);

  parallel_for(reps, options.jobs, [&](std::size_t r) {
    try {
      auto generated = generate(spec, derive_seed(spec.seed, r, stream_tag::data));
      auto analysis = drma_analyze(generated.data, link, config);
      out.t_n_squared[r] = analysis.result.t_n_squared;
      out.q_hats[r] = analysis.result.q_hat;
      if (method.bootstrap > 0) {
        BootstrapConfig bc;
        bc.replications = method.bootstrap;
        bc.refit_sdr = method.refit_sdr;
        bc.seed = derive_seed(spec.seed, r, stream_tag::bootstrap);
        bc.jobs = 1;
        auto boot = wild_bootstrap(analysis, link, config, bc);
        out.p_values[r] = boot.p_value_boot;
        out.rejected[r] = boot.p_value_boot <= spec.alpha;
      } else {
        out.p_values[r] = analysis.result.p_value;
        out.rejected[r] = spec.alpha >= 1.0 || analysis.result.p_value < spec.alpha;
      }
    } catch (const error&) {
      failed[r] = 1;
    }
  });

  double rejections = 0.0, q_total = 0.0;
  for (std::size_t r = 0; r < reps; ++r) {
    if (failed[r]) {
      ++out.failures;
      continue;
    }
    ++out.replications;
    rejections += out.rejected[r];
    q_total += out.q_hats[r];
  }
  if (out.failures * 20 > spec.replications)
    throw with_stage(numerical_error(std::to_string(out.failures) + " of " + std::to_string(spec.replications) +
                                     " Monte Carlo replicates failed"),
                     "monte-carlo");
  const double m = static_cast<double>(out.replications);
  out.frequency = rejections / m;
  out.standard_error = std::sqrt(out.frequency * (1.0 - out.frequency) / m);
  out.mean_q_hat = q_total / m;
  return out;
}

/// Multipliers 0.25 + i/4, i = 0..8.
inline std::vector<double> default_bandwidth_grid() {
  std::vector<double> g;
  for (int i = 0; i <= 8; ++i) g.push_back(0.25 + i / 4.0);
  return g;
}

inline std::vector<MonteCarloResult> bandwidth_sweep(const StudySpec& spec, const MonteCarloMethod& method,
                                                     const std::vector<double>& grid,
                                                     MonteCarloOptions options = {}) {
  std::vector<MonteCarloResult> rows;
  for (double c : grid) {
    options.bandwidth_scale = c;
    rows.push_back(run_monte_carlo(spec, method, options));
  }
  return rows;
}

struct NoncentralityResult {
  double mu = 0.0;
  double standard_error = 0.0;
};

/// mu = E[(G(X) - m(X)^T Sigma_x^{-1} E[G(X) m(X)])^2 f(beta^T X)] with X ~ N(0, sigma),
/// f the exact normal density of beta^T X. Sigma_x and E[G m] come from an
/// independent draw of the same size.
inline NoncentralityResult noncentrality_mu(const std::function<double(const VectorXd&)>& departure,
                                            const LinkSpec& link, const VectorXd& beta, const VectorXd& theta,
                                            SigmaKind sigma_kind, Eigen::Index mc_samples, std::uint64_t seed) {
  if (mc_samples < 2) throw numerical_error("noncentrality needs at least 2 samples");
  const Eigen::Index p = beta.size();
  const MatrixXd sigma = make_sigma(p, sigma_kind);
  const double index_var = beta.dot(sigma * beta);
  const double norm = 1.0 / std::sqrt(2.0 * std::numbers::pi * index_var);

  counter_rng aux(derive_seed(seed, 0, stream_tag::aux));
  const MatrixXd x_aux = sample_gaussian_rows(sigma, mc_samples, aux);
  const auto grads = link_gradient_matrix(x_aux, beta, theta, link);
  VectorXd h_mean = VectorXd::Zero(p + link.d);
  for (Eigen::Index i = 0; i < mc_samples; ++i)
    h_mean += departure(x_aux.row(i).transpose()) * grads.m.row(i).transpose();
  h_mean /= static_cast<double>(mc_samples);
  Eigen::LDLT<MatrixXd> ldlt(grads.sigma_x_hat);
  if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().minCoeff() > 1e-12 * ldlt.vectorD().maxCoeff()))
    throw numerical_error("singular Sigma_x estimate");
  const VectorXd coef = ldlt.solve(h_mean);

  counter_rng main(derive_seed(seed, 1, stream_tag::aux));
  const MatrixXd x = sample_gaussian_rows(sigma, mc_samples, main);
  double sum = 0.0, sum2 = 0.0;
  for (Eigen::Index i = 0; i < mc_samples; ++i) {
    const VectorXd xi = x.row(i).transpose();
    const double u = beta.dot(xi);
    const double f = norm * std::exp(-0.5 * u * u / index_var);
    const double r = departure(xi) - link.gradient(xi, beta, theta).dot(coef);
    const double term = r * r * f;
    sum += term;
    sum2 += term * term;
  }
  const double m = static_cast<double>(mc_samples);
  NoncentralityResult out;
  out.mu = sum / m;
  out.standard_error = std::sqrt(std::max(0.0, sum2 / m - out.mu * out.mu) / m);
  return out;
}

} // namespace drma
