#pragma once

#include <string>
#include <vector>

#include "obs/rng.hpp"
#include "obs/simplex.hpp"

namespace obs {

struct StreamRecord {
  long t = 0;
  Vec x;
  double y = 0.0;
};

// Breiman/Yao-style subset regression: x ~ N(5*1_d, I_d), y = x^T theta + e,
// e ~ N(0, noise_var), with theta rescaled so Var(x^T theta)/noise_var = snr
// (with identity input covariance this is ||theta||^2 = snr).
struct SubsetRegressionSpec {
  int dim = 15;
  double input_mean = 5.0;
  double noise_var = 1.0;
  double snr = 0.8;
  int n_pretrain = 1000;
  int n_stream = 5000;
  std::uint64_t seed = 0;
};

struct SubsetRegressionData {
  std::vector<StreamRecord> pretrain;
  std::vector<StreamRecord> stream;
  Vec theta;
};

SubsetRegressionData gen_subset_regression(const SubsetRegressionSpec& spec);

// Open bank: model k regresses on coordinate k only. Closed bank: model k
// uses coordinates 0..k-1 (the last model is the true family).
std::vector<std::vector<int>> build_open_bank(int dim);
std::vector<std::vector<int>> build_closed_bank(int dim);

struct DriftStream {
  std::vector<StreamRecord> records;
  std::vector<long> boundaries;  // first index of each new segment, size n_segments-1
  std::vector<Vec> thetas;       // per-segment coefficients
};

// Piecewise-constant concept drift: theta redrawn at each segment boundary.
DriftStream gen_drift_stream(int n_segments, int segment_length, int dim,
                             std::uint64_t seed, double snr = 0.8,
                             double input_mean = 5.0);

enum class DensityRegime {
  IidLognormal,
  SingleDominant,
  AlternatingDominant,
  NearZeroOutlier,
};

DensityRegime density_regime_from_name(const std::string& name);
std::string density_regime_name(DensityRegime regime);

// Synthetic density streams for stacker-only tests. All entries positive;
// the NearZeroOutlier regime places entries exactly at 1e-300.
std::vector<DensityVector> gen_density_stream(int k, long t_steps,
                                              DensityRegime regime,
                                              std::uint64_t seed);

// CSV with columns t, x_1..x_d, y for cross-implementation replay.
std::string stream_to_csv(const std::vector<StreamRecord>& records);
std::vector<StreamRecord> stream_from_csv(const std::string& csv);

}  // namespace obs
