#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "obs/datagen.hpp"
#include "obs/models.hpp"
#include "obs/stackers.hpp"

namespace obs {

enum class Scenario { Open, Closed, Drift, GarchSim, DensityOnly };

Scenario scenario_from_name(const std::string& name);
std::string scenario_name(Scenario s);

struct NamedStackerConfig {
  std::string name;  // defaults to the algorithm name
  StackerConfig config;
};

struct ExperimentConfig {
  Scenario scenario = Scenario::DensityOnly;
  std::vector<NamedStackerConfig> stackers;
  int n_trials = 1;
  std::vector<std::uint64_t> seeds;  // sized n_trials; filled from base_seed
  std::uint64_t base_seed = 0;
  int suppress = 100;  // reporting-only warmup window
  double density_floor = 1e-300;

  // Scenario parameters.
  int dim = 15;                 // open/closed/drift input dimension
  int n_pretrain = 1000;        // open/closed pretraining points
  int n_stream = 5000;          // open/closed streamed points
  double snr = 0.8;
  double input_mean = 5.0;
  double noise_var = 1.0;
  int n_segments = 4;           // drift
  int segment_length = 500;     // drift
  int rff_features = 50;        // drift RFF-GP bank
  long t_steps = 2000;          // garch-sim / density-only stream length
  int n_models = 4;             // garch-sim bank size
  int n_particles = 200;        // garch-sim particles per filter
  int k = 5;                    // density-only ensemble size
  DensityRegime regime = DensityRegime::IidLognormal;

  void validate() const;
  static ExperimentConfig from_json_file(const std::filesystem::path& path);
  static ExperimentConfig from_json_text(const std::string& text);
};

struct StackerRun {
  std::string name;
  Algorithm algorithm = Algorithm::OBMA;
  Mat weights;        // T x K, pre-update weights used for prediction at t
  Vec log_ensemble;   // T, log(w_t . r_t)
  Vec avg_pll;        // running average of log_ensemble
  Vec regret;         // vs final BCRP weights, per step
  Vec final_weights;  // post-update weights after the last step
  double cum_log_wealth = 0.0;
  std::vector<long> collapse_steps;

  StackingTrace trace(const Mat& log_r) const;
};

struct RunReport {
  Scenario scenario = Scenario::DensityOnly;
  std::uint64_t seed = 0;
  int K = 0;
  long T = 0;
  int suppress = 100;
  Mat log_r;  // T x K floored per-model log-densities
  std::vector<StackerRun> stackers;
  Vec bcrp_weights;
  double bcrp_log_wealth = 0.0;
  double bcrp_gap = 0.0;
  double alpha_hat = 1.0;  // min over steps of min r / max r (diagnostic)

  const StackerRun& stacker(const std::string& name) const;
};

// One trial of the configured scenario: models predict, densities are
// floored, every stacker observes the same stream, BCRP and regret
// trajectories are computed at the end.
RunReport run_experiment(const ExperimentConfig& config, int trial);

// sum_t log(w . r_t) evaluated on the recorded densities.
double compute_stacking_evidence(const RunReport& report,
                                 const SimplexWeights& w);

// (sum_k w_k sum_t log r_{t,k}, max_k sum_t log r_{t,k}); the first is the
// Jensen lower bound on the stacking evidence.
std::pair<double, double> compute_bma_evidence_bound(const RunReport& report,
                                                     const SimplexWeights& w);

struct SweepRow {
  std::string algorithm;
  double rate = 0.0;
  double median_pll = 0.0;
  double std_pll = 0.0;
  int n_trials_ok = 0;
  std::string error;  // empty on success
};

// One run_experiment per (algorithm, rate, trial); EG varies its learning
// rate, ONS its beta. Per-cell failures become rows, not sweep aborts.
std::vector<SweepRow> sweep_learning_rates(const ExperimentConfig& config,
                                           const std::vector<Algorithm>& algorithms,
                                           const std::vector<double>& rates);

std::string sweep_to_csv(const std::vector<SweepRow>& rows);

// Deterministic byte output: trace.csv + summary.json in `dir`.
void write_report(const RunReport& report, const std::filesystem::path& dir);

std::string report_trace_csv(const RunReport& report);
std::string report_summary_json(const RunReport& report);

// Parsed form of an emitted trace.csv.
struct ParsedTrace {
  int K = 0;
  long T = 0;
  Mat r;  // densities
  std::vector<StackerRun> stackers;  // weights/log_ensemble/avg_pll/regret
};

ParsedTrace parse_trace_csv(const std::string& csv);

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

// Re-runs the identity and invariant checks on an emitted trace.
std::vector<CheckResult> check_trace(const ParsedTrace& trace);

}  // namespace obs
