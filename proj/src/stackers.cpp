#include "obs/stackers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace obs {

namespace {

constexpr double kCollapseThreshold = 1e-280;

// Accounts the step at the pre-update weights and advances the counter.
void account_step(StackerState& state, const DensityVector& r, double dot) {
  state.cum_log_wealth += std::log(dot);
  state.cum_log_density += r.values().array().log().matrix();
  state.t += 1;
}

double dot_or_throw(const StackerState& state, const DensityVector& r) {
  if (r.size() != state.weights.size())
    throw InvalidInput("stacker update: dimension mismatch");
  const double dot = state.weights.dot(r.values());
  if (!(dot > 0.0) || !std::isfinite(dot))
    throw NumericError("stacker update: degenerate ensemble density");
  return dot;
}

void flag_collapse(StackerState& state) {
  if (state.weights.minCoeff() < kCollapseThreshold) {
    state.collapsed = true;
    state.collapse_steps.push_back(state.t);
  }
}

}  // namespace

std::string algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::OBMA: return "OBMA";
    case Algorithm::DMA: return "DMA";
    case Algorithm::EG: return "EG";
    case Algorithm::SmoothedEG: return "SmoothedEG";
    case Algorithm::SoftBayes: return "SoftBayes";
    case Algorithm::SoftBayesOnline: return "SoftBayesOnline";
    case Algorithm::ONS: return "ONS";
    case Algorithm::DONS: return "DONS";
  }
  throw InvalidInput("unknown algorithm");
}

Algorithm algorithm_from_name(const std::string& name) {
  // Case-insensitive, tolerant of '-'/'_' separators ("o-bma", "soft_bayes").
  std::string key;
  for (char c : name)
    if (c != '-' && c != '_')
      key += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (key == "obma") return Algorithm::OBMA;
  if (key == "dma") return Algorithm::DMA;
  if (key == "eg") return Algorithm::EG;
  if (key == "smoothedeg") return Algorithm::SmoothedEG;
  if (key == "softbayes") return Algorithm::SoftBayes;
  if (key == "softbayesonline") return Algorithm::SoftBayesOnline;
  if (key == "ons") return Algorithm::ONS;
  if (key == "dons") return Algorithm::DONS;
  throw InvalidInput("unknown algorithm name: " + name);
}

StackerConfig StackerConfig::defaults(Algorithm a) {
  StackerConfig cfg;
  cfg.algorithm = a;
  switch (a) {
    case Algorithm::EG:
      cfg.learning_rate = 1e-2;
      break;
    case Algorithm::SmoothedEG:
      cfg.learning_rate = 1e-3;
      cfg.eg_smooth = 1e-2;
      break;
    case Algorithm::ONS:
      cfg.ons_delta = 0.8;
      cfg.ons_beta = 1e-2;
      cfg.learning_rate = 1e-2;
      break;
    case Algorithm::DONS:
      cfg.learning_rate = 1.0;
      cfg.dons_forget = 0.99;
      break;
    case Algorithm::DMA:
      cfg.dma_forget = 0.99;
      break;
    case Algorithm::SoftBayes:
      cfg.learning_rate = 1e-2;
      break;
    case Algorithm::SoftBayesOnline:
    case Algorithm::OBMA:
      break;
  }
  return cfg;
}

void StackerConfig::validate(int k) const {
  if (k < 1) throw InvalidInput("StackerConfig: K >= 1");
  if (!(density_floor > 0.0))
    throw InvalidInput("StackerConfig: density_floor must be positive");
  switch (algorithm) {
    case Algorithm::EG:
    case Algorithm::SmoothedEG:
      if (!(learning_rate > 0.0))
        throw InvalidInput("StackerConfig: EG learning rate must be positive");
      if (algorithm == Algorithm::SmoothedEG &&
          !(eg_smooth > 0.0 && eg_smooth < 1.0))
        throw InvalidInput("StackerConfig: eg_smooth must be in (0,1)");
      break;
    case Algorithm::SoftBayes:
      if (!(learning_rate > 0.0 && learning_rate < 1.0))
        throw InvalidInput("StackerConfig: Soft-Bayes eta must be in (0,1)");
      break;
    case Algorithm::DMA:
      if (!(dma_forget > 0.0 && dma_forget < 1.0))
        throw InvalidInput("StackerConfig: dma_forget must be in (0,1)");
      break;
    case Algorithm::ONS:
      if (!(ons_delta > 0.0 && ons_delta <= 1.0))
        throw InvalidInput("StackerConfig: ons_delta must be in (0,1]");
      if (!(ons_beta > 0.0))
        throw InvalidInput("StackerConfig: ons_beta must be positive");
      if (!(learning_rate >= 0.0 && learning_rate < 1.0))
        throw InvalidInput("StackerConfig: ONS smoothing eta must be in [0,1)");
      break;
    case Algorithm::DONS:
      if (!(learning_rate > 0.0))
        throw InvalidInput("StackerConfig: D-ONS eta must be positive");
      if (!(dons_forget > 0.0 && dons_forget < 1.0))
        throw InvalidInput("StackerConfig: dons_forget must be in (0,1)");
      break;
    case Algorithm::OBMA:
    case Algorithm::SoftBayesOnline:
      break;
  }
  if (initial_weights && initial_weights->size() != k)
    throw InvalidInput("StackerConfig: initial_weights dimension mismatch");
}

StackerState StackerState::init(int k, const StackerConfig& cfg) {
  StackerState s;
  s.weights = cfg.initial_weights ? SimplexWeights(*cfg.initial_weights).values()
                                  : Vec::Constant(k, 1.0 / k);
  s.raw_weights = s.weights;
  s.w0 = s.weights;
  s.A = Mat::Identity(k, k);
  s.b = Vec::Zero(k);
  s.P = Mat::Identity(k, k);
  s.cum_log_density = Vec::Zero(k);
  return s;
}

void obma_update(StackerState& state, const DensityVector& r) {
  const double dot = dot_or_throw(state, r);
  Vec num = state.weights.cwiseProduct(r.values());
  const double s = num.sum();
  if (!(s > 0.0))
    throw NumericCollapse("obma_update: numerator underflowed to zero",
                          state.t + 1);
  account_step(state, r, dot);
  state.weights = num / s;
  flag_collapse(state);
}

void dma_update(StackerState& state, const DensityVector& r, double gamma) {
  if (!(gamma > 0.0 && gamma <= 1.0))
    throw InvalidInput("dma_update: gamma must be in (0,1]");
  const double dot = dot_or_throw(state, r);
  Vec num = state.weights.array().pow(gamma).matrix().cwiseProduct(r.values());
  const double s = num.sum();
  if (!(s > 0.0))
    throw NumericCollapse("dma_update: numerator underflowed to zero",
                          state.t + 1);
  account_step(state, r, dot);
  state.weights = num / s;
  flag_collapse(state);
}

void eg_update(StackerState& state, const DensityVector& r, double eta) {
  if (!(eta > 0.0)) throw InvalidInput("eg_update: eta must be positive");
  const double dot = dot_or_throw(state, r);
  const Vec g = r.values() / dot;
  account_step(state, r, dot);
  // Shift by the max gradient before exponentiating; the normalization
  // cancels the shift exactly and the largest exponent is 0, so the update
  // cannot overflow even for large eta * max(r/(w.r)).
  const double shift = eta * g.maxCoeff();
  Vec num =
      state.weights.cwiseProduct((eta * g.array() - shift).exp().matrix());
  const double s = num.sum();
  if (!(s > 0.0))
    throw NumericCollapse("eg_update: weights underflowed to zero", state.t);
  state.weights = num / s;
}

void hedge_update(StackerState& state, const DensityVector& r, double eta) {
  if (!(eta > 0.0)) throw InvalidInput("hedge_update: eta must be positive");
  const double dot = dot_or_throw(state, r);
  account_step(state, r, dot);
  // Multiplicative step on g_k = -log r_k: w' ~ w . exp(-eta g) = w . r^eta.
  Vec num = state.weights.cwiseProduct(
      (eta * r.values().array().log()).exp().matrix());
  const double s = num.sum();
  if (!(s > 0.0))
    throw NumericCollapse("hedge_update: numerator underflowed to zero",
                          state.t);
  state.weights = num / s;
}

void smoothed_eg_update(StackerState& state, const DensityVector& r, double eta,
                        double mix) {
  if (!(mix >= 0.0 && mix < 1.0))
    throw InvalidInput("smoothed_eg_update: mix must be in [0,1)");
  eg_update(state, r, eta);
  const int k = static_cast<int>(state.weights.size());
  state.weights = (1.0 - mix) * state.weights + Vec::Constant(k, mix / k);
  state.weights /= state.weights.sum();
}

void softbayes_update(StackerState& state, const DensityVector& r, double eta) {
  if (!(eta >= 0.0 && eta < 1.0))
    throw InvalidInput("softbayes_update: eta must be in [0,1)");
  const double dot = dot_or_throw(state, r);
  account_step(state, r, dot);
  Vec w = state.weights.cwiseProduct(
      (1.0 - eta + eta * (r.values().array() / dot)).matrix());
  state.last_update_sum = w.sum();  // analytically 1; kept as a diagnostic
  state.weights = w / state.last_update_sum;
}

void softbayes_online_update(StackerState& state, const DensityVector& r) {
  const int k = static_cast<int>(state.weights.size());
  const double dot = dot_or_throw(state, r);
  account_step(state, r, dot);
  if (k == 1) return;  // eta_t = 0: degenerate, weights stay (1)
  const long t = state.t;  // 1-based after account_step
  const double eta_t = std::log(static_cast<double>(k)) / (2.0 * k * t);
  const double ratio = static_cast<double>(t) / (t + 1);  // eta_{t+1}/eta_t
  Vec w = state.weights.cwiseProduct(
      (1.0 - eta_t + eta_t * (r.values().array() / dot)).matrix());
  w = ratio * w + (1.0 - ratio) * state.w0;
  state.last_update_sum = w.sum();
  state.weights = w / state.last_update_sum;
}

void ons_update(StackerState& state, const DensityVector& r, double delta,
                double beta, double eta) {
  if (!(delta > 0.0 && delta <= 1.0))
    throw InvalidInput("ons_update: delta must be in (0,1]");
  if (!(beta > 0.0)) throw InvalidInput("ons_update: beta must be positive");
  if (!(eta >= 0.0 && eta < 1.0))
    throw InvalidInput("ons_update: eta must be in [0,1)");
  const int k = static_cast<int>(state.weights.size());
  const double dot = dot_or_throw(state, r);  // played (smoothed) weights
  account_step(state, r, dot);
  if (k == 1) return;

  const Vec g = r.values() / dot;
  state.A += g * g.transpose();
  state.b += (1.0 + 1.0 / beta) * g;

  const MetricMatrix metric(state.A);
  const Vec target = delta * metric.llt().solve(state.b);
  state.raw_weights = project_simplex_metric(target, metric).values();
  if (eta > 0.0) {
    state.weights =
        (1.0 - eta) * state.raw_weights + Vec::Constant(k, eta / k);
    state.weights /= state.weights.sum();
  } else {
    state.weights = state.raw_weights;
  }
}

void dons_update(StackerState& state, const DensityVector& r, double eta,
                 double gamma) {
  if (!(eta > 0.0)) throw InvalidInput("dons_update: eta must be positive");
  if (!(gamma > 0.0 && gamma < 1.0))
    throw InvalidInput("dons_update: gamma must be in (0,1)");
  const int k = static_cast<int>(state.weights.size());
  const double dot = dot_or_throw(state, r);
  const Vec w = state.weights;
  account_step(state, r, dot);
  if (k == 1) return;

  const Vec g = r.values() / dot;                  // grad of loss = -g
  state.P = (1.0 - gamma) * Mat::Identity(k, k) + gamma * state.P +
            g * g.transpose();
  const MetricMatrix metric(state.P);
  const Vec target = w + (1.0 / eta) * metric.llt().solve(g);
  state.weights = project_simplex_metric(target, metric).values();
}

Stacker::Stacker(int k, StackerConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate(k);
  state_ = StackerState::init(k, cfg_);
}

void Stacker::update(const DensityVector& r) {
  switch (cfg_.algorithm) {
    case Algorithm::OBMA:
      obma_update(state_, r);
      break;
    case Algorithm::DMA:
      dma_update(state_, r, cfg_.dma_forget);
      break;
    case Algorithm::EG:
      if (cfg_.hedge_on_log_gradients)
        hedge_update(state_, r, cfg_.learning_rate);
      else
        eg_update(state_, r, cfg_.learning_rate);
      break;
    case Algorithm::SmoothedEG:
      smoothed_eg_update(state_, r, cfg_.learning_rate, cfg_.eg_smooth);
      break;
    case Algorithm::SoftBayes:
      softbayes_update(state_, r, cfg_.learning_rate);
      break;
    case Algorithm::SoftBayesOnline:
      softbayes_online_update(state_, r);
      break;
    case Algorithm::ONS:
      ons_update(state_, r, cfg_.ons_delta, cfg_.ons_beta, cfg_.learning_rate);
      break;
    case Algorithm::DONS:
      dons_update(state_, r, cfg_.learning_rate, cfg_.dons_forget);
      break;
  }
}

namespace {

double log_wealth_at(const Vec& w, const std::vector<DensityVector>& history) {
  double lw = 0.0;
  for (const auto& r : history) lw += std::log(w.dot(r.values()));
  return lw;
}

}  // namespace

BcrpResult solve_bcrp(const std::vector<DensityVector>& history, double gap_tol,
                      long max_iter) {
  if (history.empty()) throw InvalidInput("solve_bcrp: empty history");
  const int k = history.front().size();
  for (const auto& r : history)
    if (r.size() != k) throw InvalidInput("solve_bcrp: inconsistent K");
  if (k == 1)
    return BcrpResult{SimplexWeights(Vec::Ones(1)),
                      log_wealth_at(Vec::Ones(1), history), 0.0, 0};

  const long T = static_cast<long>(history.size());
  Vec w = Vec::Constant(k, 1.0 / k);
  double gap = std::numeric_limits<double>::infinity();

  for (long iter = 0; iter < max_iter; ++iter) {
    // Gradient of the log-wealth.
    Vec grad = Vec::Zero(k);
    for (const auto& r : history) grad += r.values() / w.dot(r.values());

    int fw_idx = 0, away_idx = -1;
    grad.maxCoeff(&fw_idx);
    double away_val = std::numeric_limits<double>::infinity();
    for (int i = 0; i < k; ++i)
      if (w[i] > 1e-15 && grad[i] < away_val) {
        away_val = grad[i];
        away_idx = i;
      }

    gap = grad[fw_idx] - grad.dot(w);  // Frank-Wolfe certificate
    if (gap <= gap_tol)
      return BcrpResult{SimplexWeights::normalized(w.cwiseMax(0.0)),
                        log_wealth_at(w, history), gap, iter};

    // Pick the steeper of the FW and away directions.
    Vec d;
    double gamma_max;
    const double fw_gain = gap;
    const double away_gain = grad.dot(w) - away_val;
    if (fw_gain >= away_gain || away_idx < 0) {
      d = -w;
      d[fw_idx] += 1.0;
      gamma_max = 1.0;
    } else {
      d = w;
      d[away_idx] -= 1.0;
      const double wa = w[away_idx];
      gamma_max = (wa < 1.0 - 1e-15) ? wa / (1.0 - wa) : 1e12;
    }

    // Exact line search on the concave 1-D slice via bisection on the
    // derivative sum_t (d.r)/(w.r + gamma d.r).
    std::vector<double> wr(T), dr(T);
    for (long t = 0; t < T; ++t) {
      wr[t] = w.dot(history[t].values());
      dr[t] = d.dot(history[t].values());
    }
    auto slope = [&](double gamma) {
      double s = 0.0;
      for (long t = 0; t < T; ++t) s += dr[t] / (wr[t] + gamma * dr[t]);
      return s;
    };
    double lo = 0.0, hi = gamma_max;
    if (slope(hi) >= 0.0) {
      lo = hi;
    } else {
      for (int it = 0; it < 60 && hi - lo > 1e-16 * (1.0 + hi); ++it) {
        const double mid = 0.5 * (lo + hi);
        (slope(mid) > 0.0 ? lo : hi) = mid;
      }
    }
    const double gamma = 0.5 * (lo + hi);
    if (gamma <= 0.0) continue;
    w += gamma * d;
    w = w.cwiseMax(0.0);
    w /= w.sum();
  }
  throw NumericError("solve_bcrp: iteration cap reached", gap);
}

SimplexWeights bma_hedge_equivalence_step(const SimplexWeights& w,
                                          const DensityVector& r) {
  if (w.size() != r.size())
    throw InvalidInput("bma_hedge_equivalence_step: dimension mismatch");
  // EG with eta = 1 on gradients g_k = -log r_k: w' ~ w . exp(-g) = w . r.
  const Vec g = -r.values().array().log().matrix();
  Vec num = w.values().cwiseProduct((-g.array()).exp().matrix());
  return SimplexWeights::normalized(num);
}

Vec telescoping_regret_check(const StackingTrace& trace,
                             const SimplexWeights& prior) {
  if (trace.algorithm != Algorithm::OBMA)
    throw InvalidInput("telescoping_regret_check: trace is not from O-BMA");
  const long T = trace.log_r.rows();
  const int k = static_cast<int>(trace.log_r.cols());
  if (prior.size() != k)
    throw InvalidInput("telescoping_regret_check: prior dimension mismatch");
  Vec residual = Vec::Zero(k);
  if (T == 0) return residual;
  if (trace.final_weights.size() != k)
    throw InvalidInput("telescoping_regret_check: missing final weights");

  const double cum_log_ens = trace.log_ensemble.sum();
  for (int j = 0; j < k; ++j) {
    const double lhs = trace.log_r.col(j).sum() - cum_log_ens;
    const double rhs = std::log(trace.final_weights[j]) - std::log(prior[j]);
    residual[j] = lhs - rhs;
  }
  return residual;
}

int best_model_index(const Mat& log_r) {
  const int k = static_cast<int>(log_r.cols());
  int best = 0;
  double best_val = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < k; ++j) {
    const double v = log_r.col(j).sum();
    if (v > best_val) {  // strict: lowest index wins ties
      best_val = v;
      best = j;
    }
  }
  return best;
}

}  // namespace obs
