// Command-line front end: test, simulate, realdata, replay.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "drma/drma.hpp"
#include "drma/report.hpp"

namespace {

using nlohmann::json;

constexpr int exit_usage = 1;
constexpr int exit_data = 2;
constexpr int exit_numerical = 3;

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("DRMA_SEED")) {
    try {
      std::size_t used = 0;
      auto v = std::stoull(env, &used);
      if (used == std::string(env).size()) return v;
    } catch (const std::exception&) {
    }
    throw drma::data_error(std::string("DRMA_SEED is not an unsigned integer: '") + env + "'");
  }
  return 1;
}

drma::ColumnSelector parse_selector(const std::string& s) {
  if (!s.empty() && s.find_first_not_of("0123456789") == std::string::npos) return static_cast<std::size_t>(std::stoull(s));
  return s;
}

std::vector<std::string> split_list(const std::vector<std::string>& items) {
  std::vector<std::string> out;
  for (const auto& item : items) {
    std::stringstream ss(item);
    std::string tok;
    while (std::getline(ss, tok, ','))
      if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

std::vector<double> to_doubles(const std::vector<std::string>& items, const std::string& flag) {
  std::vector<double> out;
  for (const auto& s : split_list(items)) {
    auto v = drma::detail::parse_number(s);
    if (!v) throw CLI::ValidationError(flag, "not a number: " + s);
    out.push_back(*v);
  }
  return out;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw drma::data_error("cannot write " + path);
  out << content;
  if (!out) throw drma::data_error("failed writing " + path);
}

struct Manifest {
  std::string command;
  std::vector<std::string> argv;
  json config = json::object();
  std::uint64_t seed = 0;
  std::string started_at = drma::utc_timestamp();
  std::vector<std::string> outputs;

  void write(const std::string& path) const {
    json j = {{"command", command},   {"argv", argv},         {"config", config},
              {"seed", seed},         {"tool_version", drma::tool_version},
              {"started_at", started_at}, {"finished_at", drma::utc_timestamp()},
              {"outputs", outputs}};
    write_file(path, j.dump(2) + "\n");
  }
};

// argv that replays the run with every seed made explicit
std::vector<std::string> replay_argv(const std::vector<std::string>& argv, std::uint64_t seed) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < argv.size(); ++i) {
    if (argv[i] == "--seed") {
      ++i;
      continue;
    }
    if (argv[i].rfind("--seed=", 0) == 0) continue;
    out.push_back(argv[i]);
  }
  out.push_back("--seed");
  out.push_back(std::to_string(seed));
  return out;
}

struct TestOptions {
  std::string data;
  std::string response;
  std::string format = "auto";
  std::string method = "dee-sir";
  int bootstrap = 0;
  bool no_refit = false;
  std::optional<std::uint64_t> seed;
  double bandwidth_scale = 1.5;
  double mave_bandwidth_scale = drma::MaveConfig{}.bandwidth_scale;
  double alpha = 0.05;
  unsigned jobs = drma::default_jobs();
  bool no_intercept = false;
  bool no_size_adjust = false;
  std::string output;
  std::string manifest = "drma-test.manifest.json";
};

struct SimulateOptions {
  std::string study = "H11";
  std::string sigma = "1";
  std::vector<std::string> n = {"100"};
  std::optional<long> p;
  std::vector<std::string> a = {"0"};
  std::string error_law = "normal";
  std::vector<std::string> methods = {"dee-sir"};
  int bootstrap = 0;
  bool no_refit = false;
  int reps = 500;
  std::optional<std::uint64_t> seed;
  double alpha = 0.05;
  std::vector<std::string> bandwidth_scale = {"1.5"};
  double mave_bandwidth_scale = drma::MaveConfig{}.bandwidth_scale;
  bool sweep = false;
  bool intercept = false;
  unsigned jobs = drma::default_jobs();
  std::string out = "drma-simulation.csv";
  std::string manifest;
};

struct RealdataOptions {
  std::string data;
  std::optional<std::uint64_t> seed;
  double bandwidth_scale = 1.5;
  double mave_bandwidth_scale = drma::MaveConfig{}.bandwidth_scale;
  std::string diagnostics = "autompg-diagnostics.csv";
  std::string output;
  std::string manifest = "drma-realdata.manifest.json";
};

int cmd_test(const TestOptions& o, const std::vector<std::string>& argv) {
  const std::uint64_t seed = resolve_seed(o.seed);
  drma::LoadedDataset loaded = [&] {
    try {
      bool autompg = o.format == "autompg";
      if (o.format == "auto") {
        std::ifstream probe(o.data);
        std::string first;
        std::getline(probe, first);
        autompg = probe && first.find(',') == std::string::npos;
      }
      if (autompg) {
        if (!o.response.empty() && o.response != "mpg") throw drma::data_error("Auto-MPG input has response mpg");
        auto mpg = drma::load_autompg(o.data);
        return drma::LoadedDataset{std::move(mpg.data), mpg.dropped_rows, "mpg"};
      }
      if (o.response.empty()) throw drma::data_error("--response is required for CSV input");
      return drma::load_csv(o.data, parse_selector(o.response));
    } catch (const drma::error& e) {
      throw drma::with_stage(e, "load");
    }
  }();

  drma::PipelineConfig config;
  config.method = drma::parse_test_method(o.method);
  config.bandwidth_scale = o.bandwidth_scale;
  config.mave.bandwidth_scale = o.mave_bandwidth_scale;
  config.size_adjust = !o.no_size_adjust;
  const auto link = drma::LinkSpec::identity(!o.no_intercept);
  auto analysis = drma::drma_analyze(loaded.data, link, config);

  json out = {{"test_result", drma::to_json(analysis.result)},
              {"alpha", o.alpha},
              {"reject", analysis.result.p_value < o.alpha},
              {"data", {{"path", o.data}, {"response", loaded.response_name}, {"n", loaded.data.n()},
                        {"p", loaded.data.p()}, {"dropped_rows", loaded.dropped_rows}}}};
  if (o.bootstrap > 0) {
    drma::BootstrapConfig bc;
    bc.replications = o.bootstrap;
    bc.refit_sdr = !o.no_refit;
    bc.seed = seed;
    bc.jobs = o.jobs;
    auto boot = drma::wild_bootstrap(analysis, link, config, bc);
    out["bootstrap_result"] = drma::to_json(boot);
    out["reject"] = boot.p_value_boot <= o.alpha;
  }
  const std::string text = out.dump(2) + "\n";
  std::cout << text;

  Manifest m;
  m.command = "test";
  m.argv = replay_argv(argv, seed);
  m.seed = seed;
  m.config = {{"data", o.data},
              {"response", loaded.response_name},
              {"method", o.method},
              {"bootstrap", o.bootstrap},
              {"refit_sdr", !o.no_refit},
              {"bandwidth_scale", o.bandwidth_scale},
              {"mave_bandwidth_scale", o.mave_bandwidth_scale},
              {"alpha", o.alpha},
              {"intercept", !o.no_intercept},
              {"size_adjust", !o.no_size_adjust}};
  if (!o.output.empty()) {
    write_file(o.output, text);
    m.outputs.push_back(o.output);
  }
  if (!o.manifest.empty()) m.write(o.manifest);
  return 0;
}

int cmd_simulate(const SimulateOptions& o, const std::vector<std::string>& argv) {
  const std::uint64_t seed = resolve_seed(o.seed);
  drma::StudySpec base;
  base.study = drma::parse_study(o.study);
  base.sigma = drma::parse_sigma(o.sigma);
  base.error_law = drma::parse_error_law(o.error_law);
  base.replications = o.reps;
  base.seed = seed;
  base.alpha = o.alpha;
  if (o.p)
    base.p = *o.p;
  else
    base.p = base.study == drma::Study::study2 ? 3 : 8;

  const auto a_grid = to_doubles(o.a, "--a");
  const auto n_grid = to_doubles(o.n, "--n");
  auto c_grid = o.sweep ? drma::default_bandwidth_grid() : to_doubles(o.bandwidth_scale, "--bandwidth-scale");
  const auto methods = split_list(o.methods);
  if (a_grid.empty()) throw CLI::ValidationError("--a", "empty grid");
  if (n_grid.empty()) throw CLI::ValidationError("--n", "empty grid");
  if (c_grid.empty()) throw CLI::ValidationError("--bandwidth-scale", "empty grid");
  if (methods.empty()) throw CLI::ValidationError("--method", "empty list");
  for (double c : c_grid)
    if (!(c > 0.0)) throw CLI::ValidationError("--bandwidth-scale", "multipliers must be positive");
  for (double n : n_grid)
    if (!(n >= 3.0) || n != std::floor(n)) throw CLI::ValidationError("--n", "sample sizes must be integers >= 3");

  // validate every cell before spending time on any of them
  std::vector<drma::StudySpec> cells;
  for (double n : n_grid)
    for (double a : a_grid) {
      drma::StudySpec s = base;
      s.n = static_cast<Eigen::Index>(n);
      s.a = a;
      s.validate();
      cells.push_back(s);
    }
  std::vector<drma::MonteCarloMethod> mc_methods;
  for (const auto& name : methods) {
    drma::MonteCarloMethod m;
    try {
      m.method = drma::parse_test_method(name);
    } catch (const drma::error& e) {
      throw CLI::ValidationError("--method", e.what());
    }
    m.bootstrap = o.bootstrap;
    m.refit_sdr = !o.no_refit;
    mc_methods.push_back(m);
  }

  std::ostringstream csv;
  drma::write_monte_carlo_header(csv);
  for (const auto& cell : cells)
    for (const auto& m : mc_methods)
      for (double c : c_grid) {
        drma::MonteCarloOptions opts;
        opts.bandwidth_scale = c;
        opts.pipeline.mave.bandwidth_scale = o.mave_bandwidth_scale;
        opts.intercept = o.intercept;
        opts.jobs = o.jobs;
        drma::write_monte_carlo_row(csv, drma::run_monte_carlo(cell, m, opts));
      }
  write_file(o.out, csv.str());

  Manifest man;
  man.command = "simulate";
  man.argv = replay_argv(argv, seed);
  man.seed = seed;
  man.config = {{"study", o.study},  {"sigma", o.sigma},         {"n", n_grid},       {"p", base.p},
                {"a", a_grid},       {"error_law", o.error_law}, {"methods", methods}, {"bootstrap", o.bootstrap},
                {"refit_sdr", !o.no_refit}, {"replications", o.reps}, {"alpha", o.alpha},
                {"bandwidth_scale", c_grid}, {"mave_bandwidth_scale", o.mave_bandwidth_scale}, {"intercept", o.intercept}};
  man.outputs.push_back(o.out);
  man.write(o.manifest.empty() ? o.out + ".manifest.json" : o.manifest);
  std::cerr << "wrote " << o.out << "\n";
  return 0;
}

int cmd_realdata(const RealdataOptions& o, const std::vector<std::string>& argv) {
  const std::uint64_t seed = resolve_seed(o.seed);
  auto mpg = [&] {
    try {
      return drma::load_autompg(o.data);
    } catch (const drma::error& e) {
      throw drma::with_stage(e, "load");
    }
  }();
  const auto link = drma::LinkSpec::identity(true);
  drma::PipelineConfig dee_cfg;
  dee_cfg.method = drma::TestMethod::dee_sir;
  dee_cfg.bandwidth_scale = o.bandwidth_scale;
  dee_cfg.mave.bandwidth_scale = o.mave_bandwidth_scale;
  drma::PipelineConfig mave_cfg = dee_cfg;
  mave_cfg.method = drma::TestMethod::mave;
  auto dee = drma::drma_analyze(mpg.data, link, dee_cfg);
  auto mave = drma::drma_analyze(mpg.data, link, mave_cfg);

  // residuals against the leading DEE index
  const Eigen::VectorXd index = dee.data.x() * dee.sdr.directions.col(0);
  const double h = drma::bandwidth_rule(dee.data.n(), 1, o.bandwidth_scale);
  auto smooth = drma::nw_residual_smoother(dee.fit.residuals, index, h);
  std::ostringstream csv;
  csv << "index,residual,smoothed_residual,density,defined\n";
  for (Eigen::Index i = 0; i < index.size(); ++i) {
    const bool def = smooth.defined[static_cast<std::size_t>(i)];
    csv << drma::detail::format_double(index(i)) << ',' << drma::detail::format_double(dee.fit.residuals(i)) << ','
        << (def ? drma::detail::format_double(smooth.conditional_mean(i)) : std::string("NA")) << ','
        << drma::detail::format_double(smooth.density(i)) << ',' << (def ? 1 : 0) << '\n';
  }
  write_file(o.diagnostics, csv.str());

  json out = {{"dee", drma::to_json(dee.result)},
              {"mave", drma::to_json(mave.result)},
              {"data", {{"path", o.data}, {"n", mpg.data.n()}, {"p", mpg.data.p()}, {"dropped_rows", mpg.dropped_rows},
                        {"predictors", mpg.data.column_names()}}},
              {"diagnostics", o.diagnostics}};
  const std::string text = out.dump(2) + "\n";
  std::cout << text;

  Manifest m;
  m.command = "realdata";
  m.argv = replay_argv(argv, seed);
  m.seed = seed;
  m.config = {{"data", o.data},
              {"bandwidth_scale", o.bandwidth_scale},
              {"mave_bandwidth_scale", o.mave_bandwidth_scale},
              {"intercept", true}};
  m.outputs.push_back(o.diagnostics);
  if (!o.output.empty()) {
    write_file(o.output, text);
    m.outputs.push_back(o.output);
  }
  if (!o.manifest.empty()) m.write(o.manifest);
  return 0;
}

int run(const std::vector<std::string>& args);

int cmd_replay(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw drma::data_error("cannot open manifest " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw drma::data_error("manifest " + path + " is not valid JSON: " + e.what());
  }
  if (!j.contains("argv") || !j["argv"].is_array()) throw drma::data_error("manifest " + path + " has no argv");
  std::vector<std::string> args = {"drma"};
  for (const auto& a : j["argv"]) args.push_back(a.get<std::string>());
  if (args.size() > 1 && args[1] == "replay") throw drma::data_error("manifest replays itself");
  return run(args);
}

int run(const std::vector<std::string>& args) {
  CLI::App app{"Dimension-reduction model-adaptive lack-of-fit test"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(drma::tool_version));

  const auto alpha_check = CLI::Validator(
      [](std::string& s) -> std::string {
        auto v = drma::detail::parse_number(s);
        if (!v || !(*v > 0.0 && *v < 1.0)) return "alpha must lie in (0, 1)";
        return {};
      },
      "in (0, 1)");

  TestOptions t;
  auto* test = app.add_subcommand("test", "Test a parametric linear model on a data file");
  test->add_option("--data", t.data, "CSV file with a header row, or raw Auto-MPG file")->required();
  test->add_option("--response", t.response, "Response column name or 0-based index");
  test->add_option("--format", t.format, "auto | csv | autompg")->check(CLI::IsMember({"auto", "csv", "autompg"}));
  test->add_option("--method", t.method, "dee-sir | dee-save | mave | zheng")
      ->check(CLI::IsMember({"dee-sir", "dee-save", "mave", "zheng"}));
  test->add_option("--bootstrap", t.bootstrap, "Wild bootstrap replications (0 = chi-square calibration)")
      ->check(CLI::NonNegativeNumber);
  test->add_flag("--no-refit", t.no_refit, "Reuse the observed basis in bootstrap replicates");
  test->add_option("--seed", t.seed, "Master seed (falls back to DRMA_SEED, then 1)");
  test->add_option("--bandwidth-scale", t.bandwidth_scale, "c in h = c n^{-1/(4+q)}")->check(CLI::PositiveNumber);
  test->add_option("--mave-bandwidth-scale", t.mave_bandwidth_scale, "c in the MAVE inner bandwidth c n^{-1/(4+k)}")
      ->check(CLI::PositiveNumber);
  test->add_option("--alpha", t.alpha, "Nominal level")->check(alpha_check);
  test->add_option("--jobs", t.jobs, "Worker threads")->check(CLI::PositiveNumber);
  test->add_flag("--no-intercept", t.no_intercept, "Fit the linear model without intercept");
  test->add_flag("--no-size-adjust", t.no_size_adjust, "Report the unadjusted MAVE statistic");
  test->add_option("--output", t.output, "Also write the JSON result to this file");
  test->add_option("--manifest", t.manifest, "Manifest path ('' to skip)");

  SimulateOptions s;
  auto* sim = app.add_subcommand("simulate", "Monte Carlo size and power");
  sim->add_option("--study", s.study, "H11 | H12 | H13 | STUDY2 | STUDY3")
      ->check(CLI::IsMember({"H11", "H12", "H13", "STUDY2", "STUDY3", "h11", "h12", "h13", "study2", "study3"}));
  sim->add_option("--sigma", s.sigma, "1 (identity) | 2 (0.5^|j-l|)")->check(CLI::IsMember({"1", "2"}));
  sim->add_option("--n", s.n, "Sample sizes (comma list)");
  sim->add_option("--p", s.p, "Predictor dimension (default 8; 3 for STUDY2)");
  sim->add_option("--a", s.a, "Departure scales (comma list)");
  sim->add_option("--error-law", s.error_law, "normal | laplace")->check(CLI::IsMember({"normal", "laplace"}));
  sim->add_option("--method", s.methods, "dee-sir | dee-save | mave | zheng (comma list)");
  sim->add_option("--bootstrap", s.bootstrap, "Wild bootstrap replications per run")->check(CLI::NonNegativeNumber);
  sim->add_flag("--no-refit", s.no_refit, "Reuse the observed basis in bootstrap replicates");
  sim->add_option("--reps", s.reps, "Monte Carlo replications")->check(CLI::PositiveNumber);
  sim->add_option("--seed", s.seed, "Master seed (falls back to DRMA_SEED, then 1)");
  sim->add_option("--alpha", s.alpha, "Nominal level")->check(alpha_check);
  sim->add_option("--bandwidth-scale", s.bandwidth_scale, "Bandwidth multipliers (comma list)");
  sim->add_option("--mave-bandwidth-scale", s.mave_bandwidth_scale, "c in the MAVE inner bandwidth c n^{-1/(4+k)}")
      ->check(CLI::PositiveNumber);
  sim->add_flag("--sweep", s.sweep, "Use the multipliers 0.25 + i/4, i = 0..8");
  sim->add_flag("--intercept", s.intercept, "Fit the null model with an intercept");
  sim->add_option("--jobs", s.jobs, "Worker threads")->check(CLI::PositiveNumber);
  sim->add_option("--out", s.out, "CSV output path");
  sim->add_option("--manifest", s.manifest, "Manifest path (default <out>.manifest.json)");

  RealdataOptions r;
  auto* real = app.add_subcommand("realdata", "Auto-MPG analysis with DEE and size-adjusted MAVE");
  real->add_option("--data", r.data, "Raw Auto-MPG file (UCI layout or CSV)")->required();
  real->add_option("--seed", r.seed, "Master seed (recorded only)");
  real->add_option("--bandwidth-scale", r.bandwidth_scale, "c in h = c n^{-1/(4+q)}")->check(CLI::PositiveNumber);
  real->add_option("--mave-bandwidth-scale", r.mave_bandwidth_scale, "c in the MAVE inner bandwidth c n^{-1/(4+k)}")
      ->check(CLI::PositiveNumber);
  real->add_option("--diagnostics", r.diagnostics, "Residual-versus-index CSV");
  real->add_option("--output", r.output, "Also write the JSON result to this file");
  real->add_option("--manifest", r.manifest, "Manifest path ('' to skip)");

  std::string manifest_path;
  auto* replay = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
  replay->add_option("manifest", manifest_path, "Manifest file")->required();

  std::vector<std::string> argv(args.begin() + 1, args.end());
  try {
    std::vector<std::string> reversed(argv.rbegin(), argv.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return exit_usage;
  }

  try {
    if (*test) return cmd_test(t, argv);
    if (*sim) return cmd_simulate(s, argv);
    if (*real) return cmd_realdata(r, argv);
    if (*replay) return cmd_replay(manifest_path);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return exit_usage;
  } catch (const drma::error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == drma::error_kind::data ? exit_data : exit_numerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_numerical;
  }
  return exit_usage;
}

} // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return run(args);
}
