#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"
#include "parallel.hpp"
#include "pipeline.hpp"
#include "rng.hpp"

namespace drma {

/// Golden-ratio two-point law: (1 - sqrt5)/2 with probability
/// (1 + sqrt5)/(2 sqrt5), otherwise (1 + sqrt5)/2. Mean 0, variance 1.
struct TwoPointLaw {
  static double low() { return 0.5 * (1.0 - std::sqrt(5.0)); }
  static double high() { return 0.5 * (1.0 + std::sqrt(5.0)); }
  static double low_probability() { return (1.0 + std::sqrt(5.0)) / (2.0 * std::sqrt(5.0)); }
  static double mean() { return low_probability() * low() + (1.0 - low_probability()) * high(); }
  static double second_moment() {
    return low_probability() * low() * low() + (1.0 - low_probability()) * high() * high();
  }
};

/// Uniform on [0, 1) from the top 53 bits.
inline double unit_uniform(counter_rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline VectorXd two_point_multipliers(Eigen::Index count, std::uint64_t seed) {
  if (count < 1) throw numerical_error("multiplier count must be >= 1");
  counter_rng rng(seed);
  const double p_low = TwoPointLaw::low_probability(), lo = TwoPointLaw::low(), hi = TwoPointLaw::high();
  VectorXd v(count);
  for (Eigen::Index i = 0; i < count; ++i) v(i) = unit_uniform(rng) < p_low ? lo : hi;
  return v;
}

struct BootstrapConfig {
  int replications = 500;
  bool refit_sdr = true; // false reuses the observed basis: faster, approximate
  std::uint64_t seed = 0;
  unsigned jobs = 1;

  void validate() const {
    if (replications < 1) throw numerical_error("bootstrap needs replications >= 1");
  }
};

struct BootstrapResult {
  std::vector<double> t_star; // successful replicates in replicate order
  double p_value_boot = 1.0;
  TestResult observed;
  int replications = 0;
  int failures = 0;
  bool refit_sdr = true;
  bool degenerate = false; // observed fit was perfect
};

/// (1 + #{t* >= t}) / (1 + B).
inline double bootstrap_p_value(const std::vector<double>& t_star, double observed) {
  std::size_t exceed = 0;
  for (double t : t_star)
    if (t >= observed) ++exceed;
  return (1.0 + static_cast<double>(exceed)) / (1.0 + static_cast<double>(t_star.size()));
}

/// Wild bootstrap of a completed analysis: y*_i = fitted_i + e_i V_i, then the
/// whole pipeline is rerun on (x_i, y*_i).
inline BootstrapResult wild_bootstrap(const DrmaAnalysis& analysis, const LinkSpec& link,
                                      const PipelineConfig& pipeline, const BootstrapConfig& config) {
  config.validate();
  const auto reps = static_cast<std::size_t>(config.replications);
  const Eigen::Index n = analysis.data.n();
  PipelineConfig inner = pipeline;
  if (!config.refit_sdr && pipeline.method != TestMethod::zheng) inner.fixed_directions = analysis.sdr.directions;

  std::vector<double> stats(reps, std::numeric_limits<double>::quiet_NaN());
  std::vector<char> failed(reps, 0);
  parallel_for(reps, config.jobs, [&](std::size_t b) {
    const VectorXd v = two_point_multipliers(n, derive_seed(config.seed, b, stream_tag::bootstrap));
    VectorXd y_star = analysis.fit.fitted + analysis.fit.residuals.cwiseProduct(v);
    try {
      auto rep = drma_analyze_prepared(analysis.original.with_response(y_star), analysis.data.with_response(y_star),
                                       analysis.record, link, inner);
      stats[b] = rep.result.t_n;
    } catch (const error&) {
      failed[b] = 1;
    }
  });

  BootstrapResult out;
  out.observed = analysis.result;
  out.replications = config.replications;
  out.refit_sdr = config.refit_sdr;
  out.degenerate = analysis.result.degenerate;
  for (std::size_t b = 0; b < reps; ++b) {
    if (failed[b])
      ++out.failures;
    else
      out.t_star.push_back(stats[b]);
  }
  if (out.failures * 10 > config.replications)
    throw with_stage(numerical_error(std::to_string(out.failures) + " of " + std::to_string(config.replications) +
                                     " bootstrap replicates failed"),
                     "bootstrap");
  out.p_value_boot = bootstrap_p_value(out.t_star, analysis.result.t_n);
  return out;
}

inline BootstrapResult wild_bootstrap(const Dataset& data, const LinkSpec& link, const PipelineConfig& pipeline,
                                      const BootstrapConfig& config) {
  return wild_bootstrap(drma_analyze(data, link, pipeline), link, pipeline, config);
}

} // namespace drma
