#include "obs/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace obs {

namespace {

using json = nlohmann::ordered_json;

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double median(std::vector<double> v) {
  if (v.empty()) throw InvalidInput("median of empty set");
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double stddev(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= v.size();
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / (v.size() - 1));
}

void require_keys(const json& obj, const std::set<std::string>& allowed,
                  const std::string& where) {
  for (const auto& [key, _] : obj.items())
    if (!allowed.count(key))
      throw InvalidInput("config: unknown key '" + key + "' in " + where);
}

}  // namespace

Scenario scenario_from_name(const std::string& name) {
  if (name == "open") return Scenario::Open;
  if (name == "closed") return Scenario::Closed;
  if (name == "drift") return Scenario::Drift;
  if (name == "garch-sim") return Scenario::GarchSim;
  if (name == "density-only") return Scenario::DensityOnly;
  throw InvalidInput("unknown scenario: " + name);
}

std::string scenario_name(Scenario s) {
  switch (s) {
    case Scenario::Open: return "open";
    case Scenario::Closed: return "closed";
    case Scenario::Drift: return "drift";
    case Scenario::GarchSim: return "garch-sim";
    case Scenario::DensityOnly: return "density-only";
  }
  throw InvalidInput("unknown scenario");
}

void ExperimentConfig::validate() const {
  if (n_trials < 1) throw InvalidInput("config: n_trials >= 1");
  if (!seeds.empty() && static_cast<int>(seeds.size()) != n_trials)
    throw InvalidInput("config: seeds length must equal n_trials");
  if (stackers.empty()) throw InvalidInput("config: at least one stacker");
  if (!(density_floor > 0.0))
    throw InvalidInput("config: density_floor must be positive");
  if (suppress < 0) throw InvalidInput("config: suppress >= 0");
  const int kk = (scenario == Scenario::Open || scenario == Scenario::Closed)
                     ? dim
                 : scenario == Scenario::Drift ? 5
                 : scenario == Scenario::GarchSim ? n_models
                                                  : k;
  for (const auto& s : stackers) s.config.validate(kk);
}

ExperimentConfig ExperimentConfig::from_json_file(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("config: cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return from_json_text(buf.str());
}

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const std::exception& e) {
    throw InvalidInput(std::string("config: JSON parse error: ") + e.what());
  }
  require_keys(doc,
               {"scenario", "stackers", "n_trials", "seeds", "seed", "suppress",
                "density_floor", "data"},
               "top level");

  ExperimentConfig cfg;
  cfg.scenario = scenario_from_name(doc.at("scenario").get<std::string>());
  cfg.n_trials = doc.value("n_trials", 1);
  cfg.base_seed = doc.value("seed", std::uint64_t{0});
  cfg.suppress = doc.value("suppress", 100);
  cfg.density_floor = doc.value("density_floor", 1e-300);
  if (doc.contains("seeds"))
    cfg.seeds = doc["seeds"].get<std::vector<std::uint64_t>>();

  for (const auto& s : doc.at("stackers")) {
    require_keys(s,
                 {"algorithm", "name", "learning_rate", "dma_forget",
                  "ons_delta", "ons_beta", "dons_forget", "eg_smooth"},
                 "stacker entry");
    const Algorithm alg = algorithm_from_name(s.at("algorithm").get<std::string>());
    StackerConfig sc = StackerConfig::defaults(alg);
    if (s.contains("learning_rate")) sc.learning_rate = s["learning_rate"].get<double>();
    if (s.contains("dma_forget")) sc.dma_forget = s["dma_forget"].get<double>();
    if (s.contains("ons_delta")) sc.ons_delta = s["ons_delta"].get<double>();
    if (s.contains("ons_beta")) sc.ons_beta = s["ons_beta"].get<double>();
    if (s.contains("dons_forget")) sc.dons_forget = s["dons_forget"].get<double>();
    if (s.contains("eg_smooth")) sc.eg_smooth = s["eg_smooth"].get<double>();
    sc.density_floor = cfg.density_floor;
    cfg.stackers.push_back(
        {s.value("name", algorithm_name(alg)), std::move(sc)});
  }

  if (doc.contains("data")) {
    const json& d = doc["data"];
    switch (cfg.scenario) {
      case Scenario::Open:
      case Scenario::Closed:
        require_keys(d, {"dim", "n_pretrain", "n_stream", "snr", "input_mean",
                         "noise_var"},
                     "data (open/closed)");
        cfg.dim = d.value("dim", cfg.dim);
        cfg.n_pretrain = d.value("n_pretrain", cfg.n_pretrain);
        cfg.n_stream = d.value("n_stream", cfg.n_stream);
        cfg.snr = d.value("snr", cfg.snr);
        cfg.input_mean = d.value("input_mean", cfg.input_mean);
        cfg.noise_var = d.value("noise_var", cfg.noise_var);
        break;
      case Scenario::Drift:
        require_keys(d, {"dim", "n_segments", "segment_length", "n_pretrain",
                         "rff_features"},
                     "data (drift)");
        cfg.dim = d.value("dim", 3);
        cfg.n_segments = d.value("n_segments", cfg.n_segments);
        cfg.segment_length = d.value("segment_length", cfg.segment_length);
        cfg.n_pretrain = d.value("n_pretrain", 200);
        cfg.rff_features = d.value("rff_features", cfg.rff_features);
        break;
      case Scenario::GarchSim:
        require_keys(d, {"t_steps", "n_models", "n_particles"},
                     "data (garch-sim)");
        cfg.t_steps = d.value("t_steps", cfg.t_steps);
        cfg.n_models = d.value("n_models", cfg.n_models);
        cfg.n_particles = d.value("n_particles", cfg.n_particles);
        break;
      case Scenario::DensityOnly:
        require_keys(d, {"k", "t_steps", "regime"}, "data (density-only)");
        cfg.k = d.value("k", cfg.k);
        cfg.t_steps = d.value("t_steps", cfg.t_steps);
        if (d.contains("regime"))
          cfg.regime = density_regime_from_name(d["regime"].get<std::string>());
        break;
    }
  }

  cfg.validate();
  return cfg;
}

StackingTrace StackerRun::trace(const Mat& log_r) const {
  StackingTrace t;
  t.algorithm = algorithm;
  t.log_r = log_r;
  t.weights = weights;
  t.log_ensemble = log_ensemble;
  t.final_weights = final_weights;
  return t;
}

const StackerRun& RunReport::stacker(const std::string& name) const {
  for (const auto& s : stackers)
    if (s.name == name) return s;
  throw InvalidInput("RunReport: no stacker named " + name);
}

namespace {

struct TrialSetup {
  std::vector<std::unique_ptr<PredictiveModel>> models;
  std::vector<StreamRecord> stream;
  std::vector<DensityVector> densities;  // density-only scenario
  int K = 0;
};

// Fits (prior_var, noise_var) per bank model by prequential grid search on
// the pretraining slice, then replays the slice into the selected model.
std::unique_ptr<PredictiveModel> fit_subset_model(
    const std::vector<int>& indices,
    const std::vector<std::pair<Vec, double>>& pretrain) {
  static const std::vector<double> prior_grid = {1e-2, 1e-1, 1.0, 1e1, 1e2};
  static const std::vector<double> noise_grid = {0.25, 0.5, 1.0, 2.0, 4.0};

  std::vector<std::function<std::unique_ptr<PredictiveModel>()>> grid;
  std::vector<std::pair<double, double>> hypers;
  for (double pv : prior_grid)
    for (double nv : noise_grid) {
      hypers.emplace_back(pv, nv);
      grid.push_back([=]() {
        return std::make_unique<LinearSubsetModel>(indices, pv, nv);
      });
    }
  const auto fit = empirical_bayes_fit(pretrain, grid);
  auto [pv, nv] = hypers[fit.best_index];
  auto model = std::make_unique<LinearSubsetModel>(indices, pv, nv);
  for (const auto& [x, y] : pretrain) model->observe(x, y);
  return model;
}

TrialSetup build_regression_setup(const ExperimentConfig& cfg,
                                  std::uint64_t seed, bool open) {
  SubsetRegressionSpec spec;
  spec.dim = cfg.dim;
  spec.input_mean = cfg.input_mean;
  spec.noise_var = cfg.noise_var;
  spec.snr = cfg.snr;
  spec.n_pretrain = cfg.n_pretrain;
  spec.n_stream = cfg.n_stream;
  spec.seed = seed;
  auto data = gen_subset_regression(spec);

  std::vector<std::pair<Vec, double>> pretrain;
  pretrain.reserve(data.pretrain.size());
  for (const auto& rec : data.pretrain) pretrain.emplace_back(rec.x, rec.y);

  const auto bank = open ? build_open_bank(cfg.dim) : build_closed_bank(cfg.dim);
  TrialSetup setup;
  setup.K = static_cast<int>(bank.size());
  for (const auto& indices : bank)
    setup.models.push_back(fit_subset_model(indices, pretrain));
  setup.stream = std::move(data.stream);
  return setup;
}

TrialSetup build_drift_setup(const ExperimentConfig& cfg, std::uint64_t seed) {
  auto data = gen_drift_stream(cfg.n_segments, cfg.segment_length, cfg.dim, seed,
                               cfg.snr, cfg.input_mean);
  const long total = static_cast<long>(data.records.size());
  const long n_pre = std::min<long>(cfg.n_pretrain, total / 2);

  // RFF-GP bank over random-walk scales 1e0 .. 1e-4, sharing one basis so
  // the models differ only in drift variance.
  Rng rng(seed ^ 0xD1F7A5EULL);
  const double lengthscale = std::sqrt(static_cast<double>(cfg.dim));
  RFFBasis base = RFFBasis::sample(cfg.rff_features, cfg.dim, lengthscale,
                                   M_SQRT1_2, 0.0, rng);
  TrialSetup setup;
  for (int k = 0; k >= -4; --k) {
    RFFBasis basis = base;
    const double sigma_rw = std::pow(10.0, k);
    basis.random_walk_var = sigma_rw * sigma_rw;
    setup.models.push_back(std::make_unique<RffGpModel>(std::move(basis), 1.0, 1.0));
  }
  setup.K = static_cast<int>(setup.models.size());

  for (long i = 0; i < n_pre; ++i)
    for (auto& m : setup.models) m->observe(data.records[i].x, data.records[i].y);
  setup.stream.assign(data.records.begin() + n_pre, data.records.end());
  return setup;
}

TrialSetup build_garch_setup(const ExperimentConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);

  // Simulated GARCH(1,1) observations.
  const double a0 = 0.05, a1 = 0.1, b = 0.85;
  double var = a0 / (1.0 - a1 - b);
  TrialSetup setup;
  setup.stream.reserve(cfg.t_steps);
  for (long t = 0; t < cfg.t_steps; ++t) {
    const double y = std::sqrt(var) * rng.normal();
    StreamRecord rec;
    rec.t = t;
    rec.x = Vec::Zero(1);
    rec.y = y;
    setup.stream.push_back(std::move(rec));
    var = a0 + a1 * y * y + b * var;
  }

  // Bank of SMC filters whose prior centers are drawn from uniform
  // hyperpriors.
  for (int m = 0; m < cfg.n_models; ++m) {
    GarchPrior prior;
    prior.a0_mean = 0.01 + 0.19 * rng.uniform();
    prior.a1_mean = 0.3 * rng.uniform();
    prior.b_mean = 0.5 + 0.45 * rng.uniform();
    setup.models.push_back(std::make_unique<GarchSmcModel>(
        cfg.n_particles, prior, rng.next_u64()));
  }
  setup.K = cfg.n_models;
  return setup;
}

}  // namespace

RunReport run_experiment(const ExperimentConfig& config, int trial) {
  config.validate();
  if (trial < 0 || trial >= config.n_trials)
    throw InvalidInput("run_experiment: trial index out of range");
  const std::uint64_t seed = config.seeds.empty()
                                 ? config.base_seed + static_cast<std::uint64_t>(trial)
                                 : config.seeds[trial];

  TrialSetup setup;
  switch (config.scenario) {
    case Scenario::Open:
      setup = build_regression_setup(config, seed, /*open=*/true);
      break;
    case Scenario::Closed:
      setup = build_regression_setup(config, seed, /*open=*/false);
      break;
    case Scenario::Drift:
      setup = build_drift_setup(config, seed);
      break;
    case Scenario::GarchSim:
      setup = build_garch_setup(config, seed);
      break;
    case Scenario::DensityOnly:
      setup.densities = gen_density_stream(config.k, config.t_steps,
                                           config.regime, seed);
      setup.K = config.k;
      break;
  }

  const bool density_only = config.scenario == Scenario::DensityOnly;
  const long T = density_only ? static_cast<long>(setup.densities.size())
                              : static_cast<long>(setup.stream.size());
  const int K = setup.K;
  const double log_floor = std::log(config.density_floor);

  RunReport report;
  report.scenario = config.scenario;
  report.seed = seed;
  report.K = K;
  report.T = T;
  report.suppress = config.suppress;
  report.log_r = Mat(T, K);

  std::vector<Stacker> stackers;
  stackers.reserve(config.stackers.size());
  for (const auto& s : config.stackers) stackers.emplace_back(K, s.config);

  const int S = static_cast<int>(stackers.size());
  report.stackers.resize(S);
  for (int s = 0; s < S; ++s) {
    report.stackers[s].name = config.stackers[s].name;
    report.stackers[s].algorithm = config.stackers[s].config.algorithm;
    report.stackers[s].weights = Mat(T, K);
    report.stackers[s].log_ensemble = Vec(T);
    report.stackers[s].avg_pll = Vec(T);
    report.stackers[s].regret = Vec(T);
  }

  // Densities flow in log space; per step a shared max-subtraction keeps
  // the exponentiated vector representable, and log-wealth terms are
  // recovered by adding the shift back.
  std::vector<DensityVector> scaled_history;
  scaled_history.reserve(T);

  for (long t = 0; t < T; ++t) {
    Vec log_dens(K);
    if (density_only) {
      log_dens = setup.densities[t].values().array().log().matrix();
    } else {
      const auto& rec = setup.stream[t];
      for (int m = 0; m < K; ++m) {
        double ld;
        try {
          ld = setup.models[m]->predict_log_density(rec.x, rec.y);
        } catch (const std::exception& e) {
          throw NumericError("model " + std::to_string(m) + " failed at step " +
                             std::to_string(t) + ": " + e.what());
        }
        if (std::isnan(ld))
          throw NumericError("model " + std::to_string(m) +
                             " produced NaN log-density at step " + std::to_string(t));
        log_dens[m] = ld;
      }
    }
    log_dens = log_dens.cwiseMax(log_floor);
    report.log_r.row(t) = log_dens.transpose();

    const double shift = log_dens.maxCoeff();
    Vec scaled = (log_dens.array() - shift).exp().cwiseMax(1e-300);
    DensityVector r(scaled);
    scaled_history.push_back(r);

    const double ratio = log_dens.minCoeff() - shift;  // log(min r / max r)
    report.alpha_hat = std::min(report.alpha_hat, std::exp(ratio));

    for (int s = 0; s < S; ++s) {
      auto& run = report.stackers[s];
      const Vec w = stackers[s].state().weights;
      run.weights.row(t) = w.transpose();
      run.log_ensemble[t] = shift + std::log(w.dot(r.values()));
      stackers[s].update(r);
    }

    if (!density_only) {
      const auto& rec = setup.stream[t];
      for (auto& m : setup.models) m->observe(rec.x, rec.y);
    }
  }

  // BCRP on the scaled history (weights are invariant to per-step scaling);
  // log-wealth is recovered with the accumulated shifts.
  const auto bcrp = solve_bcrp(scaled_history);
  report.bcrp_weights = bcrp.weights.values();
  report.bcrp_gap = bcrp.duality_gap;
  double shift_sum = 0.0;
  for (long t = 0; t < T; ++t) shift_sum += report.log_r.row(t).maxCoeff();
  report.bcrp_log_wealth = bcrp.log_wealth + shift_sum;

  for (int s = 0; s < S; ++s) {
    auto& run = report.stackers[s];
    run.final_weights = stackers[s].state().weights;
    run.collapse_steps = stackers[s].state().collapse_steps;
    double cum = 0.0, bcrp_cum = 0.0;
    for (long t = 0; t < T; ++t) {
      cum += run.log_ensemble[t];
      run.avg_pll[t] = cum / (t + 1);
      bcrp_cum += std::log(report.bcrp_weights.dot(scaled_history[t].values())) +
                  report.log_r.row(t).maxCoeff();
      run.regret[t] = bcrp_cum - cum;
    }
    run.cum_log_wealth = cum;
  }
  return report;
}

double compute_stacking_evidence(const RunReport& report,
                                 const SimplexWeights& w) {
  if (w.size() != report.K)
    throw InvalidInput("compute_stacking_evidence: dimension mismatch");
  double total = 0.0;
  for (long t = 0; t < report.T; ++t) {
    const double shift = report.log_r.row(t).maxCoeff();
    double s = 0.0;
    for (int k = 0; k < report.K; ++k)
      s += w[k] * std::exp(report.log_r(t, k) - shift);
    total += shift + std::log(s);
  }
  return total;
}

std::pair<double, double> compute_bma_evidence_bound(const RunReport& report,
                                                     const SimplexWeights& w) {
  if (w.size() != report.K)
    throw InvalidInput("compute_bma_evidence_bound: dimension mismatch");
  double lhs = 0.0;
  double rhs = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < report.K; ++k) {
    const double colsum = report.log_r.col(k).sum();
    lhs += w[k] * colsum;
    rhs = std::max(rhs, colsum);
  }
  if (lhs > rhs + 1e-9)
    throw NumericError("compute_bma_evidence_bound: Jensen bound violated",
                       lhs - rhs);
  if (report.T > 0 && lhs > compute_stacking_evidence(report, w) + 1e-9)
    throw NumericError(
        "compute_bma_evidence_bound: lower bound exceeds stacking evidence");
  return {lhs, rhs};
}

std::vector<SweepRow> sweep_learning_rates(const ExperimentConfig& config,
                                           const std::vector<Algorithm>& algorithms,
                                           const std::vector<double>& rates) {
  std::vector<SweepRow> rows;
  for (const Algorithm alg : algorithms) {
    for (const double rate : rates) {
      SweepRow row;
      row.algorithm = algorithm_name(alg);
      row.rate = rate;

      ExperimentConfig cell = config;
      StackerConfig sc = StackerConfig::defaults(alg);
      if (alg == Algorithm::ONS)
        sc.ons_beta = rate;
      else
        sc.learning_rate = rate;
      cell.stackers = {{algorithm_name(alg), sc}};

      std::vector<double> plls;
      try {
        for (int trial = 0; trial < cell.n_trials; ++trial) {
          const auto report = run_experiment(cell, trial);
          const auto& run = report.stackers.front();
          if (!run.final_weights.allFinite() ||
              std::abs(run.final_weights.sum() - 1.0) > 1e-6)
            throw NumericError("sweep: non-simplex final weights");
          plls.push_back(run.avg_pll[report.T - 1]);
        }
        row.median_pll = median(plls);
        row.std_pll = stddev(plls);
        row.n_trials_ok = static_cast<int>(plls.size());
      } catch (const std::exception& e) {
        row.error = e.what();
        row.median_pll = std::numeric_limits<double>::quiet_NaN();
        row.std_pll = std::numeric_limits<double>::quiet_NaN();
        row.n_trials_ok = static_cast<int>(plls.size());
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << "algorithm,rate,median_pll,std_pll,n_trials_ok,error\n";
  for (const auto& r : rows) {
    out << r.algorithm << ',' << fmt17(r.rate) << ',' << fmt17(r.median_pll)
        << ',' << fmt17(r.std_pll) << ',' << r.n_trials_ok << ',' << r.error
        << '\n';
  }
  return out.str();
}

std::string report_trace_csv(const RunReport& report) {
  std::ostringstream out;
  out << "t";
  for (int k = 1; k <= report.K; ++k) out << ",r_" << k;
  for (const auto& s : report.stackers) {
    for (int k = 1; k <= report.K; ++k) out << ',' << s.name << ".w_" << k;
    out << ',' << s.name << ".log_ens," << s.name << ".avg_pll," << s.name
        << ".regret";
  }
  out << '\n';
  for (long t = 0; t < report.T; ++t) {
    out << (t + 1);
    for (int k = 0; k < report.K; ++k)
      out << ',' << fmt17(std::exp(report.log_r(t, k)));
    for (const auto& s : report.stackers) {
      for (int k = 0; k < report.K; ++k) out << ',' << fmt17(s.weights(t, k));
      out << ',' << fmt17(s.log_ensemble[t]) << ',' << fmt17(s.avg_pll[t])
          << ',' << fmt17(s.regret[t]);
    }
    out << '\n';
  }
  return out.str();
}

std::string report_summary_json(const RunReport& report) {
  json doc;
  doc["schema_version"] = 1;
  doc["scenario"] = scenario_name(report.scenario);
  doc["seed"] = report.seed;
  doc["K"] = report.K;
  doc["T"] = report.T;
  doc["suppress"] = report.suppress;
  doc["alpha_hat"] = report.alpha_hat;

  json bcrp;
  bcrp["weights"] = std::vector<double>(report.bcrp_weights.data(),
                                        report.bcrp_weights.data() + report.K);
  bcrp["log_wealth"] = report.bcrp_log_wealth;
  bcrp["duality_gap"] = report.bcrp_gap;
  doc["bcrp"] = std::move(bcrp);

  json stackers = json::array();
  for (const auto& s : report.stackers) {
    json entry;
    entry["name"] = s.name;
    entry["algorithm"] = algorithm_name(s.algorithm);
    entry["final_weights"] = std::vector<double>(
        s.final_weights.data(), s.final_weights.data() + report.K);
    entry["cum_log_wealth"] = s.cum_log_wealth;
    entry["avg_pll_final"] = report.T > 0 ? s.avg_pll[report.T - 1] : 0.0;
    if (report.T > report.suppress) {
      double post = 0.0;
      for (long t = report.suppress; t < report.T; ++t)
        post += s.log_ensemble[t];
      entry["avg_pll_post_suppress"] = post / (report.T - report.suppress);
    } else {
      entry["avg_pll_post_suppress"] = nullptr;
    }
    entry["regret_final"] = report.T > 0 ? s.regret[report.T - 1] : 0.0;
    entry["collapse_steps"] = s.collapse_steps;

    if (s.algorithm == Algorithm::OBMA && report.T > 0) {
      const Vec res = telescoping_regret_check(
          s.trace(report.log_r), SimplexWeights(s.weights.row(0).transpose()));
      entry["telescoping_max_abs_residual"] = res.cwiseAbs().maxCoeff();
    }
    stackers.push_back(std::move(entry));
  }
  doc["stackers"] = std::move(stackers);
  return doc.dump(2) + "\n";
}

void write_report(const RunReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "trace.csv", std::ios::binary);
    if (!out) throw InvalidInput("write_report: cannot write trace.csv");
    out << report_trace_csv(report);
  }
  {
    std::ofstream out(dir / "summary.json", std::ios::binary);
    if (!out) throw InvalidInput("write_report: cannot write summary.json");
    out << report_summary_json(report);
  }
}

ParsedTrace parse_trace_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line)) throw InvalidInput("parse_trace_csv: empty input");

  std::vector<std::string> header;
  {
    std::istringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) header.push_back(cell);
  }
  if (header.empty() || header[0] != "t")
    throw InvalidInput("parse_trace_csv: malformed header");

  int K = 0;
  while (1 + K < static_cast<int>(header.size()) &&
         header[1 + K] == "r_" + std::to_string(K + 1))
    ++K;
  if (K == 0) throw InvalidInput("parse_trace_csv: no density columns");

  // Stacker groups: K weight columns, then log_ens, avg_pll, regret.
  ParsedTrace trace;
  trace.K = K;
  size_t pos = 1 + K;
  while (pos < header.size()) {
    const std::string& first = header[pos];
    const auto dot = first.rfind(".w_1");
    if (dot == std::string::npos || dot + 4 != first.size())
      throw InvalidInput("parse_trace_csv: unexpected column " + first);
    const std::string name = first.substr(0, dot);
    if (pos + K + 3 > header.size() ||
        header[pos + K] != name + ".log_ens" ||
        header[pos + K + 1] != name + ".avg_pll" ||
        header[pos + K + 2] != name + ".regret")
      throw InvalidInput("parse_trace_csv: malformed group for " + name);
    StackerRun run;
    run.name = name;
    trace.stackers.push_back(std::move(run));
    pos += K + 3;
  }

  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::istringstream r(line);
    std::string cell;
    while (std::getline(r, cell, ',')) row.push_back(std::stod(cell));
    if (row.size() != header.size())
      throw InvalidInput("parse_trace_csv: ragged row");
    rows.push_back(std::move(row));
  }
  const long T = static_cast<long>(rows.size());
  trace.T = T;
  trace.r = Mat(T, K);
  for (auto& s : trace.stackers) {
    s.weights = Mat(T, K);
    s.log_ensemble = Vec(T);
    s.avg_pll = Vec(T);
    s.regret = Vec(T);
  }
  for (long t = 0; t < T; ++t) {
    for (int k = 0; k < K; ++k) trace.r(t, k) = rows[t][1 + k];
    size_t c = 1 + K;
    for (auto& s : trace.stackers) {
      for (int k = 0; k < K; ++k) s.weights(t, k) = rows[t][c + k];
      s.log_ensemble[t] = rows[t][c + K];
      s.avg_pll[t] = rows[t][c + K + 1];
      s.regret[t] = rows[t][c + K + 2];
      c += K + 3;
    }
  }
  return trace;
}

std::vector<CheckResult> check_trace(const ParsedTrace& trace) {
  std::vector<CheckResult> results;
  auto add = [&](const std::string& name, bool pass, const std::string& detail) {
    results.push_back({name, pass, detail});
  };

  // Densities positive and finite.
  bool dens_ok = trace.r.allFinite() && (trace.r.array() > 0.0).all();
  add("densities_positive_finite", dens_ok, "");

  std::vector<DensityVector> history;
  if (dens_ok)
    for (long t = 0; t < trace.T; ++t)
      history.emplace_back(trace.r.row(t).transpose());

  for (const auto& s : trace.stackers) {
    // Simplex validity of every weight row.
    double worst_sum = 0.0, worst_neg = 0.0;
    for (long t = 0; t < trace.T; ++t) {
      worst_sum = std::max(worst_sum, std::abs(s.weights.row(t).sum() - 1.0));
      worst_neg = std::min(worst_neg, s.weights.row(t).minCoeff());
    }
    add(s.name + ".weights_simplex", worst_sum < 1e-6 && worst_neg > -1e-12,
        "max |sum-1| = " + std::to_string(worst_sum));

    // log_ens consistency against w and r.
    double worst_ens = 0.0;
    for (long t = 0; t < trace.T; ++t) {
      const double recomputed =
          std::log(s.weights.row(t).dot(trace.r.row(t)));
      worst_ens = std::max(worst_ens, std::abs(recomputed - s.log_ensemble[t]));
    }
    add(s.name + ".log_ens_consistent", worst_ens < 1e-9,
        "max residual = " + std::to_string(worst_ens));

    // Running-average identity.
    double worst_avg = 0.0, cum = 0.0;
    for (long t = 0; t < trace.T; ++t) {
      cum += s.log_ensemble[t];
      worst_avg = std::max(worst_avg, std::abs(cum / (t + 1) - s.avg_pll[t]));
    }
    add(s.name + ".avg_pll_consistent", worst_avg < 1e-9,
        "max residual = " + std::to_string(worst_avg));

    // O-BMA telescoping identity over the first T-1 steps (the trace rows
    // carry pre-update weights, so row T holds the weights after step T-1).
    if (s.name.rfind("OBMA", 0) == 0 && trace.T >= 2) {
      StackingTrace st;
      st.algorithm = Algorithm::OBMA;
      st.log_r = trace.r.topRows(trace.T - 1).array().log().matrix();
      st.weights = s.weights.topRows(trace.T - 1);
      st.log_ensemble = s.log_ensemble.head(trace.T - 1);
      st.final_weights = s.weights.row(trace.T - 1).transpose();
      const Vec res = telescoping_regret_check(
          st, SimplexWeights(s.weights.row(0).transpose()));
      add(s.name + ".telescoping_identity", res.cwiseAbs().maxCoeff() < 1e-8,
          "max |residual| = " + std::to_string(res.cwiseAbs().maxCoeff()));
    }
  }

  // Final regret against a re-solved BCRP.
  if (dens_ok && trace.T > 0) {
    try {
      const auto bcrp = solve_bcrp(history);
      for (const auto& s : trace.stackers) {
        double lw = 0.0;
        for (long t = 0; t < trace.T; ++t) lw += s.log_ensemble[t];
        const double regret = bcrp.log_wealth - lw;
        add(s.name + ".final_regret_consistent",
            std::abs(regret - s.regret[trace.T - 1]) < 1e-4,
            "recomputed = " + std::to_string(regret) + ", stored = " +
                std::to_string(s.regret[trace.T - 1]));
        add(s.name + ".regret_nonnegative", s.regret[trace.T - 1] >= -1e-6,
            "final regret = " + std::to_string(s.regret[trace.T - 1]));
      }
    } catch (const std::exception& e) {
      add("bcrp_resolve", false, e.what());
    }
  }
  return results;
}

}  // namespace obs
