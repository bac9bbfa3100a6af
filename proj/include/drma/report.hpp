#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "bootstrap.hpp"
#include "simulation.hpp"
#include "statistic.hpp"

namespace drma {

inline constexpr const char* tool_version = "1.0.0";

namespace detail {

inline nlohmann::json number(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

inline nlohmann::json vector_json(const VectorXd& v) {
  auto a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(number(v(i)));
  return a;
}

inline nlohmann::json vector_json(const std::vector<double>& v) {
  auto a = nlohmann::json::array();
  for (double x : v) a.push_back(number(x));
  return a;
}

/// Row-major nested array.
inline nlohmann::json matrix_json(const MatrixXd& m) {
  auto a = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) a.push_back(vector_json(VectorXd(m.row(r).transpose())));
  return a;
}

inline std::string format_double(double v, const char* fmt = "%.17g") {
  if (!std::isfinite(v)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

} // namespace detail

inline nlohmann::json to_json(const TestResult& r) {
  return {
      {"v_n", detail::number(r.v_n)},
      {"var_hat", detail::number(r.var_hat)},
      {"t_n", detail::number(r.t_n)},
      {"t_n_squared", detail::number(r.t_n_squared)},
      {"p_value", detail::number(r.p_value)},
      {"h", detail::number(r.h)},
      {"q_hat", r.q_hat},
      {"sdr_method", r.sdr_method},
      {"n", r.n},
      {"degenerate", r.degenerate},
      {"size_adjusted", r.size_adjusted},
      {"t_n_unadjusted", detail::number(r.t_n_unadjusted)},
      {"bandwidth_scale", detail::number(r.bandwidth_scale)},
      {"intercept", r.intercept},
      {"beta_hat", detail::vector_json(r.beta_hat)},
      {"directions", detail::matrix_json(r.directions)},
      {"sdr_eigenvalues", detail::vector_json(r.sdr_eigenvalues)},
      {"criterion_values", detail::vector_json(r.criterion_values)},
  };
}

inline nlohmann::json to_json(const BootstrapResult& b) {
  return {
      {"replications", b.replications},
      {"failures", b.failures},
      {"refit_sdr", b.refit_sdr},
      {"p_value_boot", detail::number(b.p_value_boot)},
      {"degenerate", b.degenerate},
      {"t_star", detail::vector_json(b.t_star)},
  };
}

inline const std::vector<std::string>& monte_carlo_csv_header() {
  static const std::vector<std::string> h = {"study", "n", "p", "a", "sigma", "error_law", "method", "frequency",
                                             "stderr", "mean_q_hat", "replications", "seed", "bandwidth_scale"};
  return h;
}

inline void write_monte_carlo_header(std::ostream& out) {
  const auto& h = monte_carlo_csv_header();
  for (std::size_t i = 0; i < h.size(); ++i) out << (i ? "," : "") << h[i];
  out << '\n';
}

inline void write_monte_carlo_row(std::ostream& out, const MonteCarloResult& r) {
  out << to_string(r.spec.study) << ',' << r.spec.n << ',' << r.spec.p << ',' << detail::format_double(r.spec.a, "%g")
      << ',' << to_string(r.spec.sigma) << ',' << to_string(r.spec.error_law) << ',' << r.method << ','
      << detail::format_double(r.frequency, "%.6f") << ',' << detail::format_double(r.standard_error, "%.6f") << ','
      << detail::format_double(r.mean_q_hat, "%.4f") << ',' << r.replications << ',' << r.spec.seed << ','
      << detail::format_double(r.bandwidth_scale, "%g") << '\n';
}

/// ISO-8601 UTC timestamp.
inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

} // namespace drma
