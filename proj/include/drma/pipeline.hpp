#pragma once

#include <optional>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "dataset.hpp"
#include "dee.hpp"
#include "error.hpp"
#include "kernel.hpp"
#include "mave.hpp"
#include "regression.hpp"
#include "sdr.hpp"
#include "statistic.hpp"

namespace drma {

enum class TestMethod { dee_sir, dee_save, mave, zheng };

inline std::string to_string(TestMethod m) {
  switch (m) {
  case TestMethod::dee_sir: return "DEE-SIR";
  case TestMethod::dee_save: return "DEE-SAVE";
  case TestMethod::mave: return "MAVE";
  case TestMethod::zheng: return "ZHENG";
  }
  return "?";
}

inline TestMethod parse_test_method(const std::string& s) {
  if (s == "dee-sir" || s == "DEE-SIR" || s == "dee" || s == "DEE") return TestMethod::dee_sir;
  if (s == "dee-save" || s == "DEE-SAVE") return TestMethod::dee_save;
  if (s == "mave" || s == "MAVE") return TestMethod::mave;
  if (s == "zheng" || s == "ZHENG") return TestMethod::zheng;
  throw data_error("unknown test method '" + s + "'");
}

struct PipelineConfig {
  TestMethod method = TestMethod::dee_sir;
  double bandwidth_scale = 1.5;
  bool size_adjust = true; // MAVE only
  DeeConfig dee;
  MaveConfig mave;
  VectorXd nls_init; // empty: start from the no-intercept least squares slope
  std::optional<MatrixXd> fixed_directions; // skip SDR and use this basis
};

/// Every intermediate product of one test run.
struct DrmaAnalysis {
  Dataset original; // predictors as supplied; the null model is fitted here
  Dataset data;     // standardized predictors; SDR and kernel distances use these
  StandardizationRecord record;
  FittedNullModel fit;
  SdrEstimate sdr;
  TestResult result;
};

namespace detail {

template <class Fn>
auto in_stage(const char* stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const error& e) {
    if (!e.stage().empty()) throw;
    throw with_stage(e, stage);
  }
}

} // namespace detail

inline constexpr double perfect_fit_tolerance = 1e-10;

/// The test given the raw data and its standardized copy (same response).
inline DrmaAnalysis drma_analyze_prepared(Dataset original, Dataset data, StandardizationRecord record,
                                          const LinkSpec& link, const PipelineConfig& config) {
  if (!(config.bandwidth_scale > 0.0)) throw with_stage(numerical_error("bandwidth scale must be positive"), "config");
  auto fit = detail::in_stage("fit", [&] { return fit_null_model(original, link, config.nls_init); });

  SdrEstimate sdr;
  if (config.method == TestMethod::zheng) {
    sdr.method = "ZHENG";
    sdr.q_hat = static_cast<int>(data.p());
    sdr.directions = MatrixXd::Identity(data.p(), data.p());
  } else if (config.fixed_directions) {
    sdr.method = to_string(config.method);
    sdr.directions = *config.fixed_directions;
    sdr.q_hat = static_cast<int>(sdr.directions.cols());
    if (sdr.directions.rows() != data.p() || sdr.q_hat < 1)
      throw with_stage(numerical_error("fixed SDR basis has the wrong shape"), "sdr");
  } else {
    sdr = detail::in_stage("sdr", [&] {
      switch (config.method) {
      case TestMethod::dee_sir: {
        DeeConfig c = config.dee;
        c.flavor = DeeFlavor::sir;
        return dee_estimate(data, c);
      }
      case TestMethod::dee_save: {
        DeeConfig c = config.dee;
        c.flavor = DeeFlavor::save;
        return dee_estimate(data, c);
      }
      default: return mave_estimate(data, config.mave);
      }
    });
  }

  TestResult result = detail::in_stage("statistic", [&] {
    const double h = bandwidth_rule(data.n(), sdr.q_hat, config.bandwidth_scale);
    const MatrixXd projected = data.x() * sdr.directions;
    // residuals at rounding level of the response count as an exact fit
    const bool perfect = fit.residuals.norm() <= perfect_fit_tolerance * data.y().norm();
    const VectorXd residuals = perfect ? VectorXd::Zero(data.n()) : fit.residuals;
    TestResult r = t_n_statistic(residuals, projected, h, KernelSpec(sdr.q_hat));
    if (config.method == TestMethod::mave && config.size_adjust) r = size_adjusted(r);
    return r;
  });
  result.sdr_method = sdr.method;
  result.bandwidth_scale = config.bandwidth_scale;
  result.intercept = link.linear && link.d == 1;
  result.beta_hat = fit.beta_hat;
  result.directions = sdr.directions;
  result.sdr_eigenvalues.assign(sdr.eigenvalues.data(), sdr.eigenvalues.data() + sdr.eigenvalues.size());
  result.criterion_values = sdr.criterion_values;
  return {std::move(original), std::move(data), std::move(record), std::move(fit), std::move(sdr), std::move(result)};
}

/// standardize -> fit null model -> SDR -> bandwidth -> T_n -> p-value.
/// The null model is fitted on the predictors as supplied, so an
/// intercept-free link keeps its meaning; standardized predictors feed the
/// dimension reduction and the kernel.
inline DrmaAnalysis drma_analyze(const Dataset& data, const LinkSpec& link, const PipelineConfig& config) {
  auto [standardized, record] = detail::in_stage("standardize", [&] { return standardize_columns(data); });
  return drma_analyze_prepared(data, std::move(standardized), std::move(record), link, config);
}

inline TestResult drma_test(const Dataset& data, const LinkSpec& link, const PipelineConfig& config) {
  return drma_analyze(data, link, config).result;
}

} // namespace drma
