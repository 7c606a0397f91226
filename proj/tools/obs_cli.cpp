// Batch experiment runner: `run` executes the configured scenario and emits
// trace.csv + summary.json per trial, `sweep` grids learning rates, `bcrp`
// re-solves the best constant portfolio on an emitted trace, and `check`
// re-runs the identity/invariant checks on an emitted trace.
//
// Exit codes: 0 success, 1 invalid config/input, 2 numeric failure.

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "obs/harness.hpp"

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw obs::InvalidInput("cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

int cmd_run(const std::string& config_path, const std::string& out_dir,
            int trials_override, std::int64_t seed_override, int suppress_override) {
  auto config = obs::ExperimentConfig::from_json_file(config_path);
  if (trials_override > 0) {
    config.n_trials = trials_override;
    config.seeds.clear();
  }
  if (seed_override >= 0) {
    config.base_seed = static_cast<std::uint64_t>(seed_override);
    config.seeds.clear();
  }
  if (suppress_override >= 0) config.suppress = suppress_override;
  config.validate();

  for (int trial = 0; trial < config.n_trials; ++trial) {
    const auto report = obs::run_experiment(config, trial);
    char sub[32];
    std::snprintf(sub, sizeof sub, "trial_%03d", trial);
    const auto dir = std::filesystem::path(out_dir) / sub;
    obs::write_report(report, dir);
    std::cout << sub << ": T=" << report.T << " K=" << report.K;
    for (const auto& s : report.stackers)
      std::cout << "  " << s.name << " avg_pll="
                << (report.T > 0 ? s.avg_pll[report.T - 1] : 0.0);
    std::cout << '\n';
  }
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& out_dir) {
  auto config = obs::ExperimentConfig::from_json_file(config_path);
  const std::vector<obs::Algorithm> algorithms = {obs::Algorithm::EG,
                                                  obs::Algorithm::ONS};
  const std::vector<double> rates = {1e0, 1e-1, 1e-2, 1e-3, 1e-4};
  const auto rows = obs::sweep_learning_rates(config, algorithms, rates);
  const std::string csv = obs::sweep_to_csv(rows);
  std::filesystem::create_directories(out_dir);
  std::ofstream out(std::filesystem::path(out_dir) / "sweep.csv",
                    std::ios::binary);
  out << csv;
  std::cout << csv;
  return 0;
}

int cmd_bcrp(const std::string& trace_path) {
  const auto trace = obs::parse_trace_csv(read_file(trace_path));
  std::vector<obs::DensityVector> history;
  for (long t = 0; t < trace.T; ++t)
    history.emplace_back(trace.r.row(t).transpose());
  const auto result = obs::solve_bcrp(history);
  std::cout << "bcrp_weights:";
  for (int k = 0; k < trace.K; ++k) std::cout << ' ' << result.weights[k];
  std::cout << "\nlog_wealth: " << result.log_wealth
            << "\nduality_gap: " << result.duality_gap << '\n';
  return 0;
}

int cmd_check(const std::string& trace_path) {
  const auto trace = obs::parse_trace_csv(read_file(trace_path));
  const auto results = obs::check_trace(trace);
  bool all_pass = true;
  for (const auto& r : results) {
    std::cout << (r.pass ? "PASS" : "FAIL") << ' ' << r.name;
    if (!r.detail.empty()) std::cout << " (" << r.detail << ')';
    std::cout << '\n';
    all_pass = all_pass && r.pass;
  }
  return all_pass ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Online ensembles of Bayesian predictive densities"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out", trace_path;
  int trials = -1, suppress = -1;
  std::int64_t seed = -1;

  auto* run = app.add_subcommand("run", "run the configured experiment");
  run->add_option("--config", config_path, "config JSON")->required();
  run->add_option("--out", out_dir, "output directory");
  run->add_option("--trials", trials, "override trial count");
  run->add_option("--seed", seed, "override base seed");
  run->add_option("--suppress", suppress, "reporting warmup window");

  auto* sweep = app.add_subcommand("sweep", "learning-rate grid over EG and ONS");
  sweep->add_option("--config", config_path, "config JSON")->required();
  sweep->add_option("--out", out_dir, "output directory");

  auto* bcrp = app.add_subcommand("bcrp", "solve BCRP on an emitted trace");
  bcrp->add_option("trace", trace_path, "trace.csv path")->required();

  auto* check = app.add_subcommand("check", "re-run identity checks on a trace");
  check->add_option("trace", trace_path, "trace.csv path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(config_path, out_dir, trials, seed, suppress);
    if (sweep->parsed()) return cmd_sweep(config_path, out_dir);
    if (bcrp->parsed()) return cmd_bcrp(trace_path);
    if (check->parsed()) return cmd_check(trace_path);
  } catch (const obs::InvalidInput& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const obs::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
