#include "obs/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace obs {

namespace {

double log_normal_pdf(double y, double mean, double var) {
  return -0.5 * (std::log(2.0 * M_PI * var) + (y - mean) * (y - mean) / var);
}

double logsumexp(const Vec& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

}  // namespace

GaussianLinearPosterior GaussianLinearPosterior::prior(int f, double prior_var,
                                                       double noise_var) {
  if (f < 1) throw InvalidInput("GaussianLinearPosterior: F >= 1");
  if (!(prior_var > 0.0) || !(noise_var > 0.0))
    throw InvalidInput("GaussianLinearPosterior: variances must be positive");
  GaussianLinearPosterior p;
  p.mean = Vec::Zero(f);
  p.cov = prior_var * Mat::Identity(f, f);
  p.noise_var = noise_var;
  p.prior_var = prior_var;
  return p;
}

double linreg_predict_log_density(const GaussianLinearPosterior& post,
                                  const Vec& phi, double y) {
  if (phi.size() != post.mean.size())
    throw InvalidInput("linreg_predict_log_density: dimension mismatch");
  const double mean = phi.dot(post.mean);
  const double var = phi.dot(post.cov * phi) + post.noise_var;
  if (!(var > 0.0))
    throw NumericError("linreg_predict_log_density: non-positive predictive variance",
                       var);
  return log_normal_pdf(y, mean, var);
}

GaussianLinearPosterior linreg_observe(const GaussianLinearPosterior& post,
                                       const Vec& phi, double y) {
  if (phi.size() != post.mean.size())
    throw InvalidInput("linreg_observe: dimension mismatch");
  GaussianLinearPosterior out = post;
  const Vec cphi = post.cov * phi;
  const double s = phi.dot(cphi) + post.noise_var;
  const Vec gain = cphi / s;
  out.mean = post.mean + gain * (y - phi.dot(post.mean));
  out.cov = post.cov - cphi * gain.transpose();
  out.cov = 0.5 * (out.cov + out.cov.transpose().eval());
  return out;
}

Vec RFFBasis::features(const Vec& x) const {
  const int f = static_cast<int>(phases.size());
  Vec arg = freqs * x + phases;
  return amplitude * std::sqrt(2.0 / f) * arg.array().cos().matrix();
}

RFFBasis RFFBasis::sample(int feature_dim, int input_dim, double lengthscale,
                          double amplitude, double random_walk_var, Rng& rng) {
  if (feature_dim < 1 || input_dim < 1)
    throw InvalidInput("RFFBasis::sample: dimensions must be >= 1");
  if (!(lengthscale > 0.0))
    throw InvalidInput("RFFBasis::sample: lengthscale must be positive");
  RFFBasis basis;
  basis.freqs = Mat(feature_dim, input_dim);
  for (int i = 0; i < feature_dim; ++i)
    for (int j = 0; j < input_dim; ++j)
      basis.freqs(i, j) = rng.normal() / lengthscale;
  basis.phases = Vec(feature_dim);
  for (int i = 0; i < feature_dim; ++i)
    basis.phases[i] = 2.0 * M_PI * rng.uniform();
  basis.lengthscale = lengthscale;
  basis.amplitude = amplitude;
  basis.random_walk_var = random_walk_var;
  return basis;
}

GaussianLinearPosterior rffgp_observe(const GaussianLinearPosterior& post,
                                      const RFFBasis& basis, const Vec& x,
                                      double y) {
  GaussianLinearPosterior drifted = post;
  if (basis.random_walk_var > 0.0)
    drifted.cov += basis.random_walk_var *
                   Mat::Identity(post.cov.rows(), post.cov.cols());
  return linreg_observe(drifted, basis.features(x), y);
}

LinearSubsetModel::LinearSubsetModel(std::vector<int> feature_indices,
                                     double prior_var, double noise_var)
    : indices_(std::move(feature_indices)),
      post_(GaussianLinearPosterior::prior(static_cast<int>(indices_.size()),
                                           prior_var, noise_var)) {
  if (indices_.empty()) throw InvalidInput("LinearSubsetModel: empty index set");
}

Vec LinearSubsetModel::select(const Vec& x) const {
  Vec phi(indices_.size());
  for (size_t i = 0; i < indices_.size(); ++i) {
    if (indices_[i] < 0 || indices_[i] >= x.size())
      throw InvalidInput("LinearSubsetModel: feature index out of range");
    phi[i] = x[indices_[i]];
  }
  return phi;
}

double LinearSubsetModel::predict_log_density(const Vec& x, double y) const {
  return linreg_predict_log_density(post_, select(x), y);
}

void LinearSubsetModel::observe(const Vec& x, double y) {
  post_ = linreg_observe(post_, select(x), y);
}

RffGpModel::RffGpModel(RFFBasis basis, double prior_var, double noise_var)
    : basis_(std::move(basis)),
      post_(GaussianLinearPosterior::prior(
          static_cast<int>(basis_.phases.size()), prior_var, noise_var)) {}

double RffGpModel::predict_log_density(const Vec& x, double y) const {
  // Prediction reflects the drift the next observe() will apply.
  GaussianLinearPosterior drifted = post_;
  if (basis_.random_walk_var > 0.0)
    drifted.cov += basis_.random_walk_var *
                   Mat::Identity(post_.cov.rows(), post_.cov.cols());
  return linreg_predict_log_density(drifted, basis_.features(x), y);
}

void RffGpModel::observe(const Vec& x, double y) {
  post_ = rffgp_observe(post_, basis_, x, y);
}

EmpiricalBayesResult empirical_bayes_fit(
    const std::vector<std::pair<Vec, double>>& pretrain,
    const std::vector<std::function<std::unique_ptr<PredictiveModel>()>>& grid) {
  if (pretrain.empty())
    throw InvalidInput("empirical_bayes_fit: empty pretraining sequence");
  if (grid.empty()) throw InvalidInput("empirical_bayes_fit: empty grid");

  std::vector<double> scores(grid.size());
  for (size_t g = 0; g < grid.size(); ++g) {
    auto model = grid[g]();
    double score = 0.0;
    for (const auto& [x, y] : pretrain) {
      score += model->predict_log_density(x, y);
      model->observe(x, y);
    }
    scores[g] = score;
  }
  int best = -1;
  double best_score = -std::numeric_limits<double>::infinity();
  for (size_t g = 0; g < grid.size(); ++g)
    if (std::isfinite(scores[g]) && scores[g] > best_score) {
      best_score = scores[g];
      best = static_cast<int>(g);
    }
  if (best < 0)
    throw NumericError("empirical_bayes_fit: all grid points scored -inf");
  return EmpiricalBayesResult{best, std::move(scores)};
}

// ---------------------------------------------------------------------------
// GARCH-SMC

namespace {

double sample_truncated_normal(double mean, double sd, double lo, double hi,
                               Rng& rng) {
  for (int i = 0; i < 10000; ++i) {
    const double x = mean + sd * rng.normal();
    if (x > lo && x <= hi) return x;
  }
  throw NumericError("sample_truncated_normal: rejection cap reached");
}

GarchParticle sample_garch_particle(const GarchPrior& prior, Rng& rng) {
  for (int i = 0; i < 10000; ++i) {
    GarchParticle p;
    p.a0 = sample_truncated_normal(prior.a0_mean, prior.a0_sd, 0.0, prior.a0_max, rng);
    p.a1 = sample_truncated_normal(prior.a1_mean, prior.a1_sd, -1e-300, prior.a1_max, rng);
    p.a1 = std::max(p.a1, 0.0);
    p.b = sample_truncated_normal(prior.b_mean, prior.b_sd, -1e-300, prior.b_max, rng);
    p.b = std::max(p.b, 0.0);
    if (p.a1 + p.b < 1.0) {
      p.var = p.a0 / (1.0 - p.a1 - p.b);  // stationary variance
      return p;
    }
  }
  throw NumericError("sample_garch_particle: stationarity rejection cap reached");
}

double log_prior_density(const GarchPrior& prior, const GarchParticle& p) {
  if (!(p.a0 > 0.0 && p.a0 <= prior.a0_max)) return -std::numeric_limits<double>::infinity();
  if (!(p.a1 >= 0.0 && p.a1 <= prior.a1_max)) return -std::numeric_limits<double>::infinity();
  if (!(p.b >= 0.0 && p.b <= prior.b_max)) return -std::numeric_limits<double>::infinity();
  if (!(p.a1 + p.b < 1.0)) return -std::numeric_limits<double>::infinity();
  auto lp = [](double x, double m, double s) {
    return -0.5 * (x - m) * (x - m) / (s * s);
  };
  return lp(p.a0, prior.a0_mean, prior.a0_sd) +
         lp(p.a1, prior.a1_mean, prior.a1_sd) + lp(p.b, prior.b_mean, prior.b_sd);
}

// Log-likelihood of the window under (a0, a1, b), recursing the volatility
// from the stationary variance. Returns the terminal variance too.
std::pair<double, double> window_log_likelihood(const GarchParticle& p,
                                                const std::deque<double>& obs) {
  double var = p.a0 / (1.0 - p.a1 - p.b);
  double ll = 0.0;
  for (double y : obs) {
    ll += log_normal_pdf(y, 0.0, var);
    var = p.a0 + p.a1 * y * y + p.b * var;
  }
  return {ll, var};
}

void systematic_resample(GarchParticleSet& pset, Rng& rng) {
  const int n = pset.size();
  Vec w = (pset.log_weights.array() - pset.log_weights.maxCoeff()).exp();
  w /= w.sum();
  std::vector<GarchParticle> out;
  out.reserve(n);
  const double u0 = rng.uniform() / n;
  double cum = 0.0;
  int i = 0;
  for (int j = 0; j < n; ++j) {
    const double target = u0 + static_cast<double>(j) / n;
    while (cum + w[i] < target && i < n - 1) cum += w[i++];
    out.push_back(pset.particles[i]);
  }
  pset.particles = std::move(out);
  pset.log_weights = Vec::Constant(n, -std::log(static_cast<double>(n)));
}

void rejuvenate(GarchParticleSet& pset, Rng& rng, const GarchSmcOptions& opts) {
  if (pset.recent_obs.empty()) return;
  for (auto& p : pset.particles) {
    auto [ll, var] = window_log_likelihood(p, pset.recent_obs);
    double logpost = ll + log_prior_density(pset.prior, p);
    for (int step = 0; step < opts.rejuvenation_steps; ++step) {
      GarchParticle prop = p;
      prop.a0 += opts.rw_scale * rng.normal();
      prop.a1 += opts.rw_scale * rng.normal();
      prop.b += opts.rw_scale * rng.normal();
      const double lp = log_prior_density(pset.prior, prop);
      if (!std::isfinite(lp)) {
        rng.uniform();  // keep the draw count deterministic per step
        continue;
      }
      auto [pll, pvar] = window_log_likelihood(prop, pset.recent_obs);
      const double logpost_prop = pll + lp;
      if (std::log(std::max(rng.uniform(), 1e-300)) <
          logpost_prop - logpost) {
        prop.var = pvar;
        p = prop;
        logpost = logpost_prop;
        var = pvar;
      }
    }
    p.var = var;
  }
}

}  // namespace

double GarchParticleSet::ess() const {
  const Vec w = (log_weights.array() - log_weights.maxCoeff()).exp();
  const double s = w.sum();
  return s * s / w.squaredNorm();
}

GarchParticleSet init_garch_particles(int n, const GarchPrior& prior, Rng& rng) {
  if (n < 1) throw InvalidInput("init_garch_particles: N >= 1");
  GarchParticleSet pset;
  pset.prior = prior;
  pset.particles.reserve(n);
  for (int i = 0; i < n; ++i) pset.particles.push_back(sample_garch_particle(prior, rng));
  pset.log_weights = Vec::Constant(n, -std::log(static_cast<double>(n)));
  return pset;
}

double garch_predict_log_density(const GarchParticleSet& pset, double y) {
  const int n = pset.size();
  Vec lc(n);
  for (int i = 0; i < n; ++i)
    lc[i] = pset.log_weights[i] + log_normal_pdf(y, 0.0, pset.particles[i].var);
  return logsumexp(lc);
}

GarchStepResult garch_smc_step(GarchParticleSet& pset, double y_new, Rng& rng,
                               const GarchSmcOptions& opts) {
  if (!std::isfinite(y_new)) throw InvalidInput("garch_smc_step: non-finite y");
  const int n = pset.size();

  Vec lc(n);
  for (int i = 0; i < n; ++i)
    lc[i] = pset.log_weights[i] + log_normal_pdf(y_new, 0.0, pset.particles[i].var);
  const double log_pred = logsumexp(lc);

  GarchStepResult result{log_pred, false, false};
  if (!std::isfinite(log_pred)) {
    // All particle likelihoods underflowed: flag and restart from the prior.
    result.degenerate = true;
    pset = init_garch_particles(n, pset.prior, rng);
  } else {
    pset.log_weights = lc.array() - log_pred;
  }

  // Volatility propagation with innovation eps_t = y_new.
  for (auto& p : pset.particles)
    p.var = p.a0 + p.a1 * y_new * y_new + p.b * p.var;

  pset.recent_obs.push_back(y_new);
  while (static_cast<int>(pset.recent_obs.size()) > opts.history_window)
    pset.recent_obs.pop_front();

  if (pset.ess() < 0.5 * n) {
    systematic_resample(pset, rng);
    result.resampled = true;
    if (opts.rejuvenate) rejuvenate(pset, rng, opts);
  }
  return result;
}

GarchSmcModel::GarchSmcModel(int n_particles, const GarchPrior& prior,
                             std::uint64_t seed, GarchSmcOptions opts)
    : pset_(), rng_(seed), opts_(opts) {
  pset_ = init_garch_particles(n_particles, prior, rng_);
}

double GarchSmcModel::predict_log_density(const Vec&, double y) const {
  return garch_predict_log_density(pset_, y);
}

void GarchSmcModel::observe(const Vec&, double y) {
  const auto step = garch_smc_step(pset_, y, rng_, opts_);
  degenerate_ = degenerate_ || step.degenerate;
}

}  // namespace obs
