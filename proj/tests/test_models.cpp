#include <doctest.h>

#include <cmath>

#include "obs/models.hpp"
#include "obs/rng.hpp"

using namespace obs;

namespace {

Vec vec1(double v) {
  Vec x(1);
  x << v;
  return x;
}

// Dense Kalman filter measurement update used as an independent oracle for
// the rank-one conjugate recursion.
GaussianLinearPosterior kalman_update(const GaussianLinearPosterior& post,
                                      const Vec& phi, double y) {
  GaussianLinearPosterior out = post;
  const double s = phi.dot(post.cov * phi) + post.noise_var;
  const Vec gain = (post.cov * phi) / s;
  out.mean = post.mean + gain * (y - phi.dot(post.mean));
  out.cov = post.cov - gain * (phi.transpose() * post.cov);
  out.cov = 0.5 * (out.cov + out.cov.transpose());
  return out;
}

}  // namespace

TEST_CASE("linreg predictive: N(0,2) log-density at the origin") {
  const auto post = GaussianLinearPosterior::prior(1, 1.0, 1.0);
  const double ld = linreg_predict_log_density(post, vec1(1.0), 0.0);
  CHECK(ld == doctest::Approx(-0.5 * std::log(4.0 * M_PI)).epsilon(1e-12));
}

TEST_CASE("linreg predictive: maximized at the predictive mean") {
  auto post = GaussianLinearPosterior::prior(2, 2.0, 0.5);
  Vec phi(2);
  phi << 1.0, -0.3;
  post.mean << 0.7, 0.2;
  const double mean = phi.dot(post.mean);
  const double at_mode = linreg_predict_log_density(post, phi, mean);
  for (double dy : {-1.0, -0.1, 0.1, 1.0})
    CHECK(at_mode > linreg_predict_log_density(post, phi, mean + dy));
}

TEST_CASE("linreg predictive: large noise variance lowers the density") {
  const auto tight = GaussianLinearPosterior::prior(1, 1.0, 1.0);
  const auto wide = GaussianLinearPosterior::prior(1, 1.0, 1e6);
  CHECK(linreg_predict_log_density(wide, vec1(1.0), 0.0) <
        linreg_predict_log_density(tight, vec1(1.0), 0.0));
}

TEST_CASE("linreg predictive: density integrates to one") {
  Rng rng(77);
  auto post = GaussianLinearPosterior::prior(3, 1.5, 0.7);
  Vec phi(3);
  for (int rep = 0; rep < 5; ++rep) {
    for (int i = 0; i < 3; ++i) phi[i] = rng.normal();
    const double mean = phi.dot(post.mean);
    const double sd = std::sqrt(phi.dot(post.cov * phi) + post.noise_var);
    const int n = 4000;
    const double lo = mean - 8 * sd, hi = mean + 8 * sd;
    const double h = (hi - lo) / n;
    double mass = 0.0;
    for (int i = 0; i <= n; ++i) {
      const double w = (i == 0 || i == n) ? 0.5 : 1.0;
      mass += w * std::exp(linreg_predict_log_density(post, phi, lo + i * h));
    }
    mass *= h;
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-3));
    post = linreg_observe(post, phi, rng.normal());
  }
}

TEST_CASE("linreg observe: zero feature is a no-op") {
  const auto post = GaussianLinearPosterior::prior(2, 1.0, 1.0);
  const auto after = linreg_observe(post, Vec::Zero(2), 42.0);
  CHECK((after.mean - post.mean).cwiseAbs().maxCoeff() == 0.0);
  CHECK((after.cov - post.cov).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("linreg observe: order invariance") {
  Rng rng(81);
  const auto prior = GaussianLinearPosterior::prior(3, 1.0, 0.5);
  Vec phi1(3), phi2(3);
  for (int i = 0; i < 3; ++i) {
    phi1[i] = rng.normal();
    phi2[i] = rng.normal();
  }
  const auto ab = linreg_observe(linreg_observe(prior, phi1, 1.3), phi2, -0.4);
  const auto ba = linreg_observe(linreg_observe(prior, phi2, -0.4), phi1, 1.3);
  CHECK((ab.mean - ba.mean).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((ab.cov - ba.cov).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("linreg observe: ridge oracle for repeated unit features") {
  const double prior_var = 2.0, noise_var = 0.5, c = 3.0;
  auto post = GaussianLinearPosterior::prior(1, prior_var, noise_var);
  const int t_len = 40;
  for (int t = 0; t < t_len; ++t) post = linreg_observe(post, vec1(1.0), c);
  // Closed form: precision T/sigma_n^2 + 1/sigma_theta^2.
  const double prec = t_len / noise_var + 1.0 / prior_var;
  CHECK(post.mean[0] == doctest::Approx((t_len / noise_var) * c / prec)
                            .epsilon(1e-10));
  CHECK(post.cov(0, 0) == doctest::Approx(1.0 / prec).epsilon(1e-10));
  CHECK(std::abs(post.mean[0] - c) < 0.02);
}

TEST_CASE("linreg observe: posterior covariance trace shrinks") {
  Rng rng(83);
  auto post = GaussianLinearPosterior::prior(4, 1.0, 1.0);
  double prev = post.cov.trace();
  for (int t = 0; t < 30; ++t) {
    Vec phi(4);
    for (int i = 0; i < 4; ++i) phi[i] = rng.normal();
    post = linreg_observe(post, phi, rng.normal());
    CHECK(post.cov.trace() <= prev + 1e-12);
    prev = post.cov.trace();
  }
}

TEST_CASE("rffgp observe: zero random-walk variance matches static update") {
  Rng rng(85);
  const auto basis = RFFBasis::sample(8, 2, 1.0, M_SQRT1_2, 0.0, rng);
  const auto prior = GaussianLinearPosterior::prior(8, 1.0, 1.0);
  Vec x(2);
  x << 0.3, -1.1;
  const auto via_rff = rffgp_observe(prior, basis, x, 0.7);
  const auto direct = linreg_observe(prior, basis.features(x), 0.7);
  CHECK((via_rff.mean - direct.mean).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((via_rff.cov - direct.cov).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("rffgp observe: pure diffusion grows the trace by F * sigma_rw^2") {
  Rng rng(87);
  auto basis = RFFBasis::sample(6, 2, 1.0, M_SQRT1_2, 1e-3, rng);
  auto post = GaussianLinearPosterior::prior(6, 1.0, 1.0);
  // Zero feature: the conjugate step is inert, leaving only the inflation.
  Mat zero_freqs = Mat::Zero(6, 2);
  basis.freqs = zero_freqs;
  basis.phases = Vec::Constant(6, M_PI / 2);  // cos(pi/2) = 0
  const double before = post.cov.trace();
  post = rffgp_observe(post, basis, Vec::Zero(2), 0.0);
  CHECK(post.cov.trace() == doctest::Approx(before + 6 * 1e-3).epsilon(1e-10));
}

TEST_CASE("rffgp observe: matches dense Kalman oracle") {
  Rng rng(89);
  const double rw_var = 5e-3;
  const auto basis = RFFBasis::sample(10, 3, 0.8, M_SQRT1_2, rw_var, rng);
  auto post = GaussianLinearPosterior::prior(10, 1.2, 0.6);
  auto oracle = post;
  for (int t = 0; t < 25; ++t) {
    Vec x(3);
    for (int i = 0; i < 3; ++i) x[i] = rng.normal();
    const double y = rng.normal();
    post = rffgp_observe(post, basis, x, y);
    oracle.cov += rw_var * Mat::Identity(10, 10);
    oracle = kalman_update(oracle, basis.features(x), y);
    CHECK((post.mean - oracle.mean).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((post.cov - oracle.cov).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("rff basis: bounded feature norm") {
  Rng rng(91);
  const auto basis = RFFBasis::sample(32, 4, 1.0, M_SQRT1_2, 0.0, rng);
  for (int rep = 0; rep < 100; ++rep) {
    Vec x(4);
    for (int i = 0; i < 4; ++i) x[i] = 5.0 * rng.normal();
    CHECK(basis.features(x).norm() <= 1.0 + 1e-12);
  }
}

TEST_CASE("empirical bayes: single-point grid") {
  std::vector<std::pair<Vec, double>> data = {{vec1(1.0), 0.5}};
  std::vector<std::function<std::unique_ptr<PredictiveModel>()>> grid;
  grid.push_back([] {
    return std::make_unique<LinearSubsetModel>(std::vector<int>{0}, 1.0, 1.0);
  });
  const auto res = empirical_bayes_fit(data, grid);
  CHECK(res.best_index == 0);
  CHECK(res.scores.size() == 1);
}

TEST_CASE("empirical bayes: two-point grid matches direct score evaluation") {
  Rng rng(93);
  // Data with noise variance 4: the wide-noise candidate should win, and the
  // selection must agree with explicitly computed prequential scores.
  std::vector<std::pair<Vec, double>> data;
  for (int t = 0; t < 200; ++t)
    data.push_back({vec1(rng.normal()), 2.0 * rng.normal()});

  std::vector<std::function<std::unique_ptr<PredictiveModel>()>> grid;
  for (double nv : {0.25, 4.0})
    grid.push_back([nv] {
      return std::make_unique<LinearSubsetModel>(std::vector<int>{0}, 1.0, nv);
    });
  const auto res = empirical_bayes_fit(data, grid);

  std::vector<double> direct;
  for (double nv : {0.25, 4.0}) {
    LinearSubsetModel m({0}, 1.0, nv);
    double score = 0.0;
    for (const auto& [x, y] : data) {
      score += m.predict_log_density(x, y);
      m.observe(x, y);
    }
    direct.push_back(score);
  }
  CHECK(res.scores[0] == doctest::Approx(direct[0]).epsilon(1e-12));
  CHECK(res.scores[1] == doctest::Approx(direct[1]).epsilon(1e-12));
  CHECK(res.best_index == (direct[1] > direct[0] ? 1 : 0));
  CHECK(res.best_index == 1);
}

TEST_CASE("empirical bayes: rejects empty input and all-degenerate grids") {
  std::vector<std::function<std::unique_ptr<PredictiveModel>()>> grid;
  grid.push_back([] {
    return std::make_unique<LinearSubsetModel>(std::vector<int>{0}, 1.0, 1.0);
  });
  CHECK_THROWS_AS(empirical_bayes_fit({}, grid), InvalidInput);
}

TEST_CASE("Kakade-Ng log-loss bound for the conjugate linear model") {
  Rng rng(95);
  const int f = 6;
  const double prior_var = 1.0, noise_var = 1.0;
  for (int stream = 0; stream < 3; ++stream) {
    const auto basis = RFFBasis::sample(f, 2, 1.0, M_SQRT1_2, 0.0, rng);
    auto post = GaussianLinearPosterior::prior(f, prior_var, noise_var);
    const int t_len = 500;
    std::vector<Vec> phis;
    std::vector<double> ys;
    double cum_model_loss = 0.0;
    for (int t = 0; t < t_len; ++t) {
      Vec x(2);
      x << rng.normal(), rng.normal();
      const Vec phi = basis.features(x);
      const double y = rng.normal();
      cum_model_loss -= linreg_predict_log_density(post, phi, y);
      post = linreg_observe(post, phi, y);
      phis.push_back(phi);
      ys.push_back(y);
    }
    for (int rep = 0; rep < 3; ++rep) {
      Vec theta(f);
      for (int i = 0; i < f; ++i) theta[i] = rng.normal();
      if (theta.norm() > 3.0) theta *= 3.0 / theta.norm();
      double fixed_loss = 0.0;
      for (int t = 0; t < t_len; ++t) {
        const double mu = phis[t].dot(theta);
        fixed_loss += 0.5 * std::log(2.0 * M_PI * noise_var) +
                      0.5 * (ys[t] - mu) * (ys[t] - mu) / noise_var;
      }
      const double c = 1.0 / noise_var;
      const double bound =
          theta.squaredNorm() / (2.0 * prior_var) +
          0.5 * f * std::log(1.0 + t_len * c * prior_var / f);
      CHECK(cum_model_loss - fixed_loss <= bound + 1e-9);
    }
  }
}

TEST_CASE("garch: degenerate single particle is white noise") {
  GarchParticleSet pset;
  pset.particles = {{0.3, 0.0, 0.0, 0.3}};
  pset.log_weights = Vec::Zero(1);
  Rng rng(1);
  for (int t = 0; t < 5; ++t) {
    const auto step = garch_smc_step(pset, 0.4, rng);
    const double expect =
        -0.5 * std::log(2.0 * M_PI * 0.3) - 0.5 * 0.4 * 0.4 / 0.3;
    CHECK(step.log_predictive == doctest::Approx(expect).epsilon(1e-12));
    CHECK(pset.particles[0].var == doctest::Approx(0.3).epsilon(1e-14));
  }
}

TEST_CASE("garch: two equal-weight particles average their densities") {
  GarchParticleSet pset;
  pset.particles = {{0.2, 0.05, 0.5, 0.4}, {0.1, 0.1, 0.7, 1.2}};
  pset.log_weights = Vec::Constant(2, -std::log(2.0));
  const double y = 0.6;
  auto normal_pdf = [](double v, double var) {
    return std::exp(-0.5 * v * v / var) / std::sqrt(2.0 * M_PI * var);
  };
  const double expect = 0.5 * normal_pdf(y, 0.4) + 0.5 * normal_pdf(y, 1.2);
  CHECK(garch_predict_log_density(pset, y) ==
        doctest::Approx(std::log(expect)).epsilon(1e-12));
}

TEST_CASE("garch: three-step mixture oracle") {
  GarchParticleSet pset;
  pset.particles = {{0.15, 0.1, 0.6, 0.5}, {0.08, 0.2, 0.5, 0.9}};
  pset.log_weights = Vec::Constant(2, -std::log(2.0));
  auto oracle = pset;  // evolved by hand below

  Rng rng(3);
  const std::vector<double> ys = {0.4, -0.7, 0.2};
  for (double y : ys) {
    // Hand mixture: sum rho_i N(y; 0, var_i), then reweight and propagate.
    double mix = 0.0;
    std::vector<double> lik(2);
    for (int i = 0; i < 2; ++i) {
      lik[i] = std::exp(-0.5 * y * y / oracle.particles[i].var) /
               std::sqrt(2.0 * M_PI * oracle.particles[i].var);
      mix += std::exp(oracle.log_weights[i]) * lik[i];
    }
    const auto step = garch_smc_step(pset, y, rng);
    CHECK(step.log_predictive == doctest::Approx(std::log(mix)).epsilon(1e-10));
    CHECK(!step.degenerate);
    for (int i = 0; i < 2; ++i) {
      const double w =
          std::exp(oracle.log_weights[i]) * lik[i] / mix;
      oracle.log_weights[i] = std::log(w);
      auto& p = oracle.particles[i];
      p.var = p.a0 + p.a1 * y * y + p.b * p.var;
      CHECK(std::exp(pset.log_weights[i]) == doctest::Approx(w).epsilon(1e-10));
      CHECK(pset.particles[i].var == doctest::Approx(p.var).epsilon(1e-12));
    }
  }
}

TEST_CASE("garch: particle-set invariants hold along a stream") {
  Rng rng(7);
  GarchPrior prior;
  auto pset = init_garch_particles(100, prior, rng);
  Rng data_rng(8);
  for (int t = 0; t < 300; ++t) {
    garch_smc_step(pset, 0.5 * data_rng.normal(), rng);
    double sum = 0.0;
    for (int i = 0; i < pset.size(); ++i) sum += std::exp(pset.log_weights[i]);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(pset.ess() >= 1.0 - 1e-9);
    CHECK(pset.ess() <= pset.size() + 1e-9);
    for (const auto& p : pset.particles) {
      CHECK(p.a0 > 0.0);
      CHECK(p.a1 >= 0.0);
      CHECK(p.b >= 0.0);
      CHECK(p.a1 + p.b < 1.0);
      CHECK(p.var > 0.0);
    }
  }
}

TEST_CASE("garch: underflow reinitializes the filter and flags the step") {
  GarchParticleSet pset;
  pset.particles = {{0.01, 0.0, 0.0, 1e-6}, {0.01, 0.0, 0.0, 1e-6}};
  pset.log_weights = Vec::Constant(2, -std::log(2.0));
  Rng rng(11);
  const auto step = garch_smc_step(pset, 1e160, rng);
  CHECK(step.degenerate);
  for (const auto& p : pset.particles) CHECK(p.a1 + p.b < 1.0);
}

TEST_CASE("garch: seeded runs are bit-reproducible") {
  GarchPrior prior;
  GarchSmcModel a(200, prior, 123);
  GarchSmcModel b(200, prior, 123);
  Rng data_rng(12);
  const Vec x0 = Vec::Zero(1);
  for (int t = 0; t < 200; ++t) {
    const double y = 0.7 * data_rng.normal();
    CHECK(a.predict_log_density(x0, y) == b.predict_log_density(x0, y));
    a.observe(x0, y);
    b.observe(x0, y);
  }
  CHECK((a.particles().log_weights - b.particles().log_weights)
            .cwiseAbs()
            .maxCoeff() == 0.0);
}

TEST_CASE("garch: predictive mixture integrates to one") {
  Rng rng(13);
  GarchPrior prior;
  auto pset = init_garch_particles(50, prior, rng);
  double max_sd = 0.0;
  for (const auto& p : pset.particles)
    max_sd = std::max(max_sd, std::sqrt(p.var));
  const int n = 6000;
  const double lo = -8 * max_sd, hi = 8 * max_sd;
  const double h = (hi - lo) / n;
  double mass = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double w = (i == 0 || i == n) ? 0.5 : 1.0;
    mass += w * std::exp(garch_predict_log_density(pset, lo + i * h));
  }
  mass *= h;
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("subset model: masks out unused coordinates") {
  LinearSubsetModel m({2}, 1.0, 1.0);
  Rng rng(17);
  Vec x(5);
  for (int i = 0; i < 5; ++i) x[i] = rng.normal();
  Vec perturbed = x;
  perturbed[0] += 10.0;
  CHECK(m.predict_log_density(x, 0.3) ==
        m.predict_log_density(perturbed, 0.3));
  m.observe(x, 0.3);
  CHECK(m.predict_log_density(x, 0.3) ==
        m.predict_log_density(perturbed, 0.3));
}
