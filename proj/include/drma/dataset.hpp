#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"

namespace drma {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// n observations of a p-dimensional predictor and a scalar response.
/// Construction validates shape and finiteness, so every Dataset in the
/// program is usable by the estimators without further checks.
class Dataset {
public:
  Dataset(MatrixXd x, VectorXd y, std::vector<std::string> column_names = {})
      : x_(std::move(x)), y_(std::move(y)), names_(std::move(column_names)) {
    if (x_.rows() != y_.size())
      throw data_error("predictor rows (" + std::to_string(x_.rows()) +
                       ") do not match response length (" + std::to_string(y_.size()) + ")");
    if (x_.rows() < 2) throw data_error("need at least 2 observations");
    if (x_.cols() < 1) throw data_error("need at least 1 predictor column");
    if (!x_.allFinite()) throw data_error("predictor matrix has non-finite entries");
    if (!y_.allFinite()) throw data_error("response has non-finite entries");
    if (!names_.empty() && names_.size() != static_cast<std::size_t>(x_.cols()))
      throw data_error("column name count does not match predictor count");
  }

  const MatrixXd& x() const noexcept { return x_; }
  const VectorXd& y() const noexcept { return y_; }
  const std::vector<std::string>& column_names() const noexcept { return names_; }
  Eigen::Index n() const noexcept { return x_.rows(); }
  Eigen::Index p() const noexcept { return x_.cols(); }

  /// Same predictors, different response (bootstrap resamples).
  Dataset with_response(VectorXd y) const { return Dataset(x_, std::move(y), names_); }

private:
  MatrixXd x_;
  VectorXd y_;
  std::vector<std::string> names_;
};

struct StandardizationRecord {
  VectorXd means;
  VectorXd standard_deviations;

  MatrixXd apply(const MatrixXd& x) const {
    return (x.rowwise() - means.transpose()).array().rowwise() /
           standard_deviations.transpose().array();
  }

  MatrixXd invert(const MatrixXd& z) const {
    return (z.array().rowwise() * standard_deviations.transpose().array()).matrix().rowwise() +
           means.transpose();
  }
};

struct SampleMoments {
  VectorXd mean;
  MatrixXd covariance; // divisor n
};

/// Centre each column and scale it to unit sample standard deviation
/// (divisor n - 1).
inline std::pair<Dataset, StandardizationRecord> standardize_columns(const Dataset& data) {
  const auto n = data.n();
  StandardizationRecord rec;
  rec.means = data.x().colwise().mean().transpose();
  rec.standard_deviations.resize(data.p());
  for (Eigen::Index c = 0; c < data.p(); ++c) {
    double ss = (data.x().col(c).array() - rec.means(c)).square().sum();
    double sd = std::sqrt(ss / static_cast<double>(n - 1));
    if (!(sd > 1e-12)) {
      std::string label = data.column_names().empty()
                              ? "column " + std::to_string(c)
                              : "column '" + data.column_names()[static_cast<std::size_t>(c)] + "'";
      throw data_error(label + " has zero variance");
    }
    rec.standard_deviations(c) = sd;
  }
  MatrixXd z = rec.apply(data.x());
  return {Dataset(std::move(z), data.y(), data.column_names()), std::move(rec)};
}

inline SampleMoments sample_moments(const MatrixXd& x) {
  if (x.rows() < 2) throw data_error("sample moments need n >= 2");
  SampleMoments m;
  m.mean = x.colwise().mean().transpose();
  MatrixXd centered = x.rowwise() - m.mean.transpose();
  m.covariance = (centered.transpose() * centered) / static_cast<double>(x.rows());
  m.covariance = 0.5 * (m.covariance + m.covariance.transpose()).eval();
  return m;
}

inline SampleMoments sample_moments(const Dataset& data) { return sample_moments(data.x()); }

// ---------------------------------------------------------------------------
// Ingestion

/// Raw text table: a header and rows of cells, missing cells as nullopt.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::optional<std::string>>> rows;

  std::optional<std::size_t> column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    return std::nullopt;
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline bool is_missing_token(std::string_view s) { return s.empty() || s == "?" || s == "NA"; }

inline std::optional<double> parse_number(std::string_view s) {
  double v = 0.0;
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

// Comma-separated with optional double quotes around a field.
inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

inline std::ifstream open_or_throw(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open file '" + path + "'");
  return in;
}

} // namespace detail

inline Table read_table_csv(const std::string& path) {
  auto in = detail::open_or_throw(path);
  Table t;
  std::string line;
  bool have_header = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    auto cells = detail::split_csv_line(line);
    if (!have_header) {
      t.header = std::move(cells);
      have_header = true;
      continue;
    }
    if (cells.size() != t.header.size())
      throw data_error("line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                       " cells, header has " + std::to_string(t.header.size()));
    std::vector<std::optional<std::string>> row;
    row.reserve(cells.size());
    for (auto& c : cells) {
      if (detail::is_missing_token(c))
        row.emplace_back(std::nullopt);
      else
        row.emplace_back(std::move(c));
    }
    t.rows.push_back(std::move(row));
  }
  if (!have_header) throw data_error("file '" + path + "' has no header row");
  return t;
}

/// Column names used for the Auto-MPG layouts.
inline const std::vector<std::string>& autompg_columns() {
  static const std::vector<std::string> cols = {"mpg",          "cylinders", "displacement",
                                                "horsepower",   "weight",    "acceleration",
                                                "model_year",   "origin",    "car_name"};
  return cols;
}

/// UCI whitespace layout: eight numeric fields then a double-quoted car name.
inline Table read_autompg_uci(const std::string& path) {
  auto in = detail::open_or_throw(path);
  Table t;
  t.header = autompg_columns();
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    std::string name;
    auto q = line.find('"');
    std::string numeric_part = line.substr(0, q);
    if (q != std::string::npos) {
      auto q2 = line.find('"', q + 1);
      name = line.substr(q + 1, q2 == std::string::npos ? std::string::npos : q2 - q - 1);
    }
    std::istringstream fields(numeric_part);
    std::vector<std::optional<std::string>> row;
    std::string tok;
    while (fields >> tok) {
      if (detail::is_missing_token(tok))
        row.emplace_back(std::nullopt);
      else
        row.emplace_back(tok);
    }
    if (row.size() != 8)
      throw data_error("line " + std::to_string(line_no) + ": expected 8 numeric fields, got " +
                       std::to_string(row.size()));
    row.emplace_back(name);
    t.rows.push_back(std::move(row));
  }
  if (t.rows.empty()) throw data_error("file '" + path + "' contains no records");
  return t;
}

/// Either layout; a comma on the first non-empty line selects CSV.
inline Table read_autompg(const std::string& path) {
  auto in = detail::open_or_throw(path);
  std::string line;
  while (std::getline(in, line) && detail::trim(line).empty()) {
  }
  if (line.find(',') != std::string::npos) return read_table_csv(path);
  return read_autompg_uci(path);
}

using ColumnSelector = std::variant<std::string, std::size_t>;

struct LoadedDataset {
  Dataset data;
  std::size_t dropped_rows = 0;
  std::string response_name;
};

/// Build a Dataset from a table: the response column is extracted, every other
/// column must be numeric, and incomplete rows are dropped.
inline LoadedDataset dataset_from_table(const Table& t, const ColumnSelector& response) {
  std::size_t rcol = 0;
  if (auto* name = std::get_if<std::string>(&response)) {
    auto c = t.column(*name);
    if (!c) throw data_error("response column '" + *name + "' not found");
    rcol = *c;
  } else {
    rcol = std::get<std::size_t>(response);
    if (rcol >= t.header.size())
      throw data_error("response column index " + std::to_string(rcol) + " out of range");
  }
  if (t.header.size() < 2) throw data_error("need at least one predictor column besides the response");

  std::vector<std::string> names;
  for (std::size_t c = 0; c < t.header.size(); ++c)
    if (c != rcol) names.push_back(t.header[c]);

  std::vector<std::vector<double>> kept;
  std::vector<double> ys;
  std::size_t dropped = 0;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    bool complete = true;
    double yv = 0.0;
    std::vector<double> vals;
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (!row[c]) {
        complete = false;
        continue;
      }
      auto v = detail::parse_number(*row[c]);
      if (!v)
        throw data_error("non-numeric cell '" + *row[c] + "' in column '" + t.header[c] + "' (data row " +
                         std::to_string(r + 1) + ")");
      if (c == rcol)
        yv = *v;
      else
        vals.push_back(*v);
    }
    if (!complete) {
      ++dropped;
      continue;
    }
    ys.push_back(yv);
    kept.push_back(std::move(vals));
  }
  if (kept.size() < 2)
    throw data_error("fewer than 2 complete rows (" + std::to_string(kept.size()) + ")");
  MatrixXd x(static_cast<Eigen::Index>(kept.size()), static_cast<Eigen::Index>(names.size()));
  VectorXd y(static_cast<Eigen::Index>(kept.size()));
  for (std::size_t r = 0; r < kept.size(); ++r) {
    for (std::size_t c = 0; c < names.size(); ++c)
      x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = kept[r][c];
    y(static_cast<Eigen::Index>(r)) = ys[r];
  }
  return {Dataset(std::move(x), std::move(y), std::move(names)), dropped, t.header[rcol]};
}

inline LoadedDataset load_csv(const std::string& path, const ColumnSelector& response) {
  return dataset_from_table(read_table_csv(path), response);
}

struct AutoMpgDataset {
  Dataset data;                 // standardized X1..X8, response mpg
  StandardizationRecord record; // transform applied to the raw predictors
  std::size_t dropped_rows = 0;
};

/// Response mpg; predictors cylinders, displacement, horsepower, weight,
/// acceleration, model year, and the indicators American / European origin.
/// Every predictor is standardized separately.
inline AutoMpgDataset preprocess_autompg(const Table& t) {
  auto find = [&](std::initializer_list<std::string_view> aliases) -> std::size_t {
    for (auto a : aliases)
      if (auto c = t.column(a)) return *c;
    throw data_error("required column '" + std::string(*aliases.begin()) + "' missing");
  };
  const std::size_t c_mpg = find({"mpg"});
  const std::vector<std::size_t> numeric = {
      find({"cylinders"}), find({"displacement"}), find({"horsepower"}), find({"weight"}),
      find({"acceleration"}), find({"model_year", "model-year", "year"})};
  const std::size_t c_origin = find({"origin"});

  std::vector<std::array<double, 8>> rows;
  std::vector<double> ys;
  std::size_t dropped = 0;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    auto cell = [&](std::size_t c) -> std::optional<double> {
      if (!row[c]) return std::nullopt;
      auto v = detail::parse_number(*row[c]);
      if (!v)
        throw data_error("non-numeric cell '" + *row[c] + "' in column '" + t.header[c] + "' (data row " +
                         std::to_string(r + 1) + ")");
      return v;
    };
    auto y = cell(c_mpg);
    auto origin = cell(c_origin);
    std::array<double, 8> xs{};
    bool complete = y && origin;
    for (std::size_t k = 0; k < numeric.size(); ++k) {
      auto v = cell(numeric[k]);
      if (!v)
        complete = false;
      else
        xs[k] = *v;
    }
    if (!complete) {
      ++dropped;
      continue;
    }
    long code = std::lround(*origin);
    if (code < 1 || code > 3)
      throw data_error("origin code " + std::to_string(code) + " not in {1,2,3} (data row " +
                       std::to_string(r + 1) + ")");
    xs[6] = code == 1 ? 1.0 : 0.0;
    xs[7] = code == 2 ? 1.0 : 0.0;
    rows.push_back(xs);
    ys.push_back(*y);
  }
  if (rows.size() < 2) throw data_error("fewer than 2 complete Auto-MPG records");
  MatrixXd x(static_cast<Eigen::Index>(rows.size()), 8);
  VectorXd y(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (int c = 0; c < 8; ++c) x(static_cast<Eigen::Index>(r), c) = rows[r][static_cast<std::size_t>(c)];
    y(static_cast<Eigen::Index>(r)) = ys[r];
  }
  Dataset raw(std::move(x), std::move(y),
              {"cylinders", "displacement", "horsepower", "weight", "acceleration", "model_year",
               "origin_america", "origin_europe"});
  auto [std_data, rec] = standardize_columns(raw);
  return {std::move(std_data), std::move(rec), dropped};
}

inline AutoMpgDataset load_autompg(const std::string& path) { return preprocess_autompg(read_autompg(path)); }

} // namespace drma
