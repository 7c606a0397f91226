#include "obs/datagen.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace obs {

namespace {

// All-positive weak predictors: |N(0,1)| entries rescaled to ||theta||^2 = snr.
Vec draw_weak_theta(int dim, double snr, Rng& rng) {
  Vec theta(dim);
  for (int i = 0; i < dim; ++i) theta[i] = std::abs(rng.normal());
  theta *= std::sqrt(snr) / theta.norm();
  return theta;
}

StreamRecord draw_record(long t, const Vec& theta, double input_mean,
                         double noise_sd, Rng& rng) {
  const int d = static_cast<int>(theta.size());
  StreamRecord rec;
  rec.t = t;
  rec.x = Vec(d);
  for (int i = 0; i < d; ++i) rec.x[i] = input_mean + rng.normal();
  rec.y = rec.x.dot(theta) + noise_sd * rng.normal();
  return rec;
}

}  // namespace

SubsetRegressionData gen_subset_regression(const SubsetRegressionSpec& spec) {
  if (spec.dim < 1 || spec.n_pretrain < 0 || spec.n_stream < 1)
    throw InvalidInput("gen_subset_regression: invalid spec");
  Rng rng(spec.seed);
  SubsetRegressionData data;
  data.theta = draw_weak_theta(spec.dim, spec.snr, rng);
  const double noise_sd = std::sqrt(spec.noise_var);

  long t = 0;
  data.pretrain.reserve(spec.n_pretrain);
  for (int i = 0; i < spec.n_pretrain; ++i)
    data.pretrain.push_back(draw_record(t++, data.theta, spec.input_mean, noise_sd, rng));
  data.stream.reserve(spec.n_stream);
  for (int i = 0; i < spec.n_stream; ++i)
    data.stream.push_back(draw_record(t++, data.theta, spec.input_mean, noise_sd, rng));
  return data;
}

std::vector<std::vector<int>> build_open_bank(int dim) {
  if (dim < 1) throw InvalidInput("build_open_bank: dim >= 1");
  std::vector<std::vector<int>> bank;
  for (int k = 0; k < dim; ++k) bank.push_back({k});
  return bank;
}

std::vector<std::vector<int>> build_closed_bank(int dim) {
  if (dim < 1) throw InvalidInput("build_closed_bank: dim >= 1");
  std::vector<std::vector<int>> bank;
  for (int k = 1; k <= dim; ++k) {
    std::vector<int> idx;
    for (int j = 0; j < k; ++j) idx.push_back(j);
    bank.push_back(std::move(idx));
  }
  return bank;
}

DriftStream gen_drift_stream(int n_segments, int segment_length, int dim,
                             std::uint64_t seed, double snr, double input_mean) {
  if (n_segments < 1 || segment_length < 1 || dim < 1)
    throw InvalidInput("gen_drift_stream: invalid arguments");
  Rng rng(seed);
  DriftStream out;
  long t = 0;
  for (int s = 0; s < n_segments; ++s) {
    if (s > 0) out.boundaries.push_back(t);
    out.thetas.push_back(draw_weak_theta(dim, snr, rng));
    for (int i = 0; i < segment_length; ++i)
      out.records.push_back(draw_record(t++, out.thetas.back(), input_mean, 1.0, rng));
  }
  return out;
}

DensityRegime density_regime_from_name(const std::string& name) {
  if (name == "iid-lognormal") return DensityRegime::IidLognormal;
  if (name == "single-dominant") return DensityRegime::SingleDominant;
  if (name == "alternating-dominant") return DensityRegime::AlternatingDominant;
  if (name == "near-zero-outlier") return DensityRegime::NearZeroOutlier;
  throw InvalidInput("unknown density regime: " + name);
}

std::string density_regime_name(DensityRegime regime) {
  switch (regime) {
    case DensityRegime::IidLognormal: return "iid-lognormal";
    case DensityRegime::SingleDominant: return "single-dominant";
    case DensityRegime::AlternatingDominant: return "alternating-dominant";
    case DensityRegime::NearZeroOutlier: return "near-zero-outlier";
  }
  throw InvalidInput("unknown density regime");
}

std::vector<DensityVector> gen_density_stream(int k, long t_steps,
                                              DensityRegime regime,
                                              std::uint64_t seed) {
  if (k < 1 || t_steps < 1) throw InvalidInput("gen_density_stream: invalid arguments");
  Rng rng(seed);
  std::vector<DensityVector> stream;
  stream.reserve(t_steps);
  for (long t = 0; t < t_steps; ++t) {
    Vec r(k);
    switch (regime) {
      case DensityRegime::IidLognormal:
        for (int i = 0; i < k; ++i) r[i] = std::exp(0.5 * rng.normal());
        break;
      case DensityRegime::SingleDominant:
        for (int i = 0; i < k; ++i)
          r[i] = std::exp((i == 0 ? 0.5 : -0.5) + 0.2 * rng.normal());
        break;
      case DensityRegime::AlternatingDominant:
        // Deterministic cyclic dominance; over full cycles every model sees
        // the same multiset of returns, so the BCRP is uniform.
        for (int i = 0; i < k; ++i) r[i] = (i == t % k) ? 2.0 : 0.5;
        break;
      case DensityRegime::NearZeroOutlier:
        for (int i = 0; i < k; ++i) r[i] = std::exp(0.5 * rng.normal());
        if (t % 37 == 5) r[static_cast<int>(t / 37) % k] = 1e-300;
        break;
    }
    stream.emplace_back(std::move(r));
  }
  return stream;
}

std::string stream_to_csv(const std::vector<StreamRecord>& records) {
  if (records.empty()) throw InvalidInput("stream_to_csv: empty stream");
  const int d = static_cast<int>(records.front().x.size());
  std::ostringstream out;
  out << "t";
  for (int i = 1; i <= d; ++i) out << ",x_" << i;
  out << ",y\n";
  char buf[40];
  for (const auto& rec : records) {
    out << rec.t;
    for (int i = 0; i < d; ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", rec.x[i]);
      out << ',' << buf;
    }
    std::snprintf(buf, sizeof buf, "%.17g", rec.y);
    out << ',' << buf << '\n';
  }
  return out.str();
}

std::vector<StreamRecord> stream_from_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line)) throw InvalidInput("stream_from_csv: empty input");
  int cols = 1;
  for (char c : line) cols += (c == ',');
  const int d = cols - 2;
  if (d < 1) throw InvalidInput("stream_from_csv: malformed header");

  std::vector<StreamRecord> records;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    StreamRecord rec;
    rec.x = Vec(d);
    std::getline(row, cell, ',');
    rec.t = std::stol(cell);
    for (int i = 0; i < d; ++i) {
      std::getline(row, cell, ',');
      rec.x[i] = std::stod(cell);
    }
    std::getline(row, cell, ',');
    rec.y = std::stod(cell);
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace obs
