#pragma once

#include <deque>
#include <functional>
#include <memory>
#include <vector>

#include "obs/rng.hpp"
#include "obs/simplex.hpp"

namespace obs {

// Contract every ensemble member satisfies: emit a one-step predictive
// log-density for a candidate y given x, then update on the realized pair.
class PredictiveModel {
 public:
  virtual ~PredictiveModel() = default;
  virtual double predict_log_density(const Vec& x, double y) const = 0;
  virtual void observe(const Vec& x, double y) = 0;
  virtual int feature_dim() const = 0;
};

// Conjugate Gaussian posterior over linear coefficients:
// theta ~ N(mean, cov), y | phi = N(phi^T theta, noise_var).
struct GaussianLinearPosterior {
  Vec mean;
  Mat cov;
  double noise_var = 1.0;
  double prior_var = 1.0;

  static GaussianLinearPosterior prior(int f, double prior_var,
                                       double noise_var);
};

// log N(y; phi^T mean, phi^T cov phi + noise_var)
double linreg_predict_log_density(const GaussianLinearPosterior& post,
                                  const Vec& phi, double y);

// Rank-one conjugate update.
GaussianLinearPosterior linreg_observe(const GaussianLinearPosterior& post,
                                       const Vec& phi, double y);

// Random Fourier feature map with optional random-walk drift on the linear
// coefficients: phi(x) = amplitude * sqrt(2/F) * cos(freqs x + phases).
// With amplitude <= 1/sqrt(2) the feature norm is bounded by 1.
struct RFFBasis {
  Mat freqs;      // F x d
  Vec phases;     // F
  double lengthscale = 1.0;
  double amplitude = M_SQRT1_2;
  double random_walk_var = 0.0;  // sigma_rw^2

  Vec features(const Vec& x) const;

  static RFFBasis sample(int feature_dim, int input_dim, double lengthscale,
                         double amplitude, double random_walk_var, Rng& rng);
};

// Predict-step covariance inflation by random_walk_var * I, then the
// conjugate update on phi(x).
GaussianLinearPosterior rffgp_observe(const GaussianLinearPosterior& post,
                                      const RFFBasis& basis, const Vec& x,
                                      double y);

// Linear-Gaussian model over a fixed subset of input coordinates; the
// building block of the open/closed regression banks.
class LinearSubsetModel : public PredictiveModel {
 public:
  LinearSubsetModel(std::vector<int> feature_indices, double prior_var,
                    double noise_var);

  double predict_log_density(const Vec& x, double y) const override;
  void observe(const Vec& x, double y) override;
  int feature_dim() const override { return static_cast<int>(indices_.size()); }

  const GaussianLinearPosterior& posterior() const { return post_; }
  const std::vector<int>& feature_indices() const { return indices_; }

 private:
  Vec select(const Vec& x) const;
  std::vector<int> indices_;
  GaussianLinearPosterior post_;
};

// RFF-GP streaming model with random-walk drift.
class RffGpModel : public PredictiveModel {
 public:
  RffGpModel(RFFBasis basis, double prior_var, double noise_var);

  double predict_log_density(const Vec& x, double y) const override;
  void observe(const Vec& x, double y) override;
  int feature_dim() const override { return static_cast<int>(basis_.phases.size()); }

  const GaussianLinearPosterior& posterior() const { return post_; }
  const RFFBasis& basis() const { return basis_; }

 private:
  RFFBasis basis_;
  GaussianLinearPosterior post_;
};

// Grid-search empirical Bayes: run each candidate prequentially over the
// pretraining sequence and keep the argmax of the summed one-step
// log-scores. Ties break to the lowest grid index.
struct EmpiricalBayesResult {
  int best_index;
  std::vector<double> scores;
};

EmpiricalBayesResult empirical_bayes_fit(
    const std::vector<std::pair<Vec, double>>& pretrain,
    const std::vector<std::function<std::unique_ptr<PredictiveModel>()>>& grid);

// ---------------------------------------------------------------------------
// GARCH(1,1) with Gaussian innovations, posterior tracked by SMC.

struct GarchPrior {
  // Truncated Gaussian prior per parameter; stationarity a1 + b < 1 enforced
  // by rejection.
  double a0_mean = 0.1, a0_sd = 0.1;   // a0 in (0, 0.5]
  double a1_mean = 0.1, a1_sd = 0.1;   // a1 in [0, 0.5]
  double b_mean = 0.8, b_sd = 0.1;     // b  in [0, 0.98]
  double a0_max = 0.5, a1_max = 0.5, b_max = 0.98;
};

struct GarchParticle {
  double a0, a1, b;
  double var;  // conditional variance for the next observation
};

struct GarchParticleSet {
  std::vector<GarchParticle> particles;
  Vec log_weights;                 // log rho, normalized to logsumexp = 0
  std::deque<double> recent_obs;   // rejuvenation window, newest last
  GarchPrior prior;

  double ess() const;
  int size() const { return static_cast<int>(particles.size()); }
};

struct GarchSmcOptions {
  int rejuvenation_steps = 5;
  int history_window = 50;
  double rw_scale = 0.02;  // random-walk Metropolis proposal scale
  bool rejuvenate = true;
};

GarchParticleSet init_garch_particles(int n, const GarchPrior& prior, Rng& rng);

// Mixture predictive density at y under the current particle set.
double garch_predict_log_density(const GarchParticleSet& pset, double y);

struct GarchStepResult {
  double log_predictive;
  bool resampled;
  bool degenerate;  // filter reinitialized from the prior
};

// Predictive evaluation, reweighting, volatility propagation, and (when the
// effective sample size halves) systematic resampling plus MCMC rejuvenation.
GarchStepResult garch_smc_step(GarchParticleSet& pset, double y_new, Rng& rng,
                               const GarchSmcOptions& opts = {});

class GarchSmcModel : public PredictiveModel {
 public:
  GarchSmcModel(int n_particles, const GarchPrior& prior, std::uint64_t seed,
                GarchSmcOptions opts = {});

  // x is accepted and ignored: the model is a pure time series.
  double predict_log_density(const Vec& x, double y) const override;
  void observe(const Vec& x, double y) override;
  int feature_dim() const override { return 0; }

  const GarchParticleSet& particles() const { return pset_; }
  bool saw_degenerate_step() const { return degenerate_; }

 private:
  GarchParticleSet pset_;
  Rng rng_;
  GarchSmcOptions opts_;
  bool degenerate_ = false;
};

}  // namespace obs
