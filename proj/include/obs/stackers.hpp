#pragma once

#include <optional>
#include <string>
#include <vector>

#include "obs/simplex.hpp"

namespace obs {

enum class Algorithm {
  OBMA,
  DMA,
  EG,
  SmoothedEG,
  SoftBayes,
  SoftBayesOnline,
  ONS,
  DONS,
};

std::string algorithm_name(Algorithm a);
Algorithm algorithm_from_name(const std::string& name);

// Hyperparameters for one ensemble-weighting algorithm. Fields irrelevant to
// the chosen algorithm are ignored. Defaults follow the reference settings:
// EG eta = 1e-2; ONS delta = 0.8, beta = eta = 1e-2; D-ONS eta = 1.0,
// forget = 0.99; DMA forget = 0.99; smoothed EG eta = 1e-3, mix = 1e-2.
struct StackerConfig {
  Algorithm algorithm = Algorithm::EG;
  double learning_rate = 1e-2;  // eta
  double dma_forget = 0.99;     // gamma
  double ons_delta = 0.8;
  double ons_beta = 1e-2;
  double dons_forget = 0.99;
  double eg_smooth = 1e-2;      // uniform-mix coefficient for SmoothedEG
  double density_floor = 1e-300;
  // EG only: apply the multiplicative (Hedge) step on the per-model
  // log-loss gradients, w' ~ w . r^eta, instead of the linearized wealth
  // gradient. With eta = 1 this is exactly O-BMA.
  bool hedge_on_log_gradients = false;
  std::optional<Vec> initial_weights;

  static StackerConfig defaults(Algorithm a);
  void validate(int k) const;
};

// Mutable per-stream state of one stacker. `weights` is the vector played
// for prediction at the next step (for ONS with smoothing this is the
// smoothed vector; the raw projection output is kept in `raw_weights`).
struct StackerState {
  Vec weights;          // played weights, on the simplex
  Vec raw_weights;      // ONS: unsmoothed projection output
  long t = 0;           // number of updates applied
  Mat A;                // ONS accumulator, I + sum r r^T / (w.r)^2
  Vec b;                // ONS accumulator, (1 + 1/beta) sum r / (w.r)
  Mat P;                // D-ONS discounted second-order accumulator
  Vec w0;               // initial weights (Soft-Bayes online anchor)
  double cum_log_wealth = 0.0;   // sum_t log(w_t . r_t)
  Vec cum_log_density;           // per-model sum_t log r_{t,k}
  double last_update_sum = 0.0;  // pre-renormalization weight sum (Soft-Bayes)
  bool collapsed = false;        // any O-BMA/DMA weight fell below 1e-280
  std::vector<long> collapse_steps;

  static StackerState init(int k, const StackerConfig& cfg);
};

// One sequential update per algorithm. Each observes the density vector r_t,
// accounts log-wealth at the pre-update weights, and advances the weights.
void obma_update(StackerState& state, const DensityVector& r);
void dma_update(StackerState& state, const DensityVector& r, double gamma);
void eg_update(StackerState& state, const DensityVector& r, double eta);
void hedge_update(StackerState& state, const DensityVector& r, double eta);
void smoothed_eg_update(StackerState& state, const DensityVector& r, double eta,
                        double mix);
void softbayes_update(StackerState& state, const DensityVector& r, double eta);
void softbayes_online_update(StackerState& state, const DensityVector& r);
void ons_update(StackerState& state, const DensityVector& r, double delta,
                double beta, double eta);
void dons_update(StackerState& state, const DensityVector& r, double eta,
                 double gamma);

// Sequential facade dispatching on StackerConfig.
class Stacker {
 public:
  Stacker(int k, StackerConfig cfg);

  void update(const DensityVector& r);
  SimplexWeights weights() const { return SimplexWeights(state_.weights); }
  const StackerState& state() const { return state_; }
  const StackerConfig& config() const { return cfg_; }

 private:
  StackerConfig cfg_;
  StackerState state_;
};

struct BcrpResult {
  SimplexWeights weights;
  double log_wealth;
  double duality_gap;
  long iterations;
};

// Best constantly rebalanced portfolio: argmax_w sum_t log(w . r_t), solved
// by away-step Frank-Wolfe with exact line search. The returned gap
// certifies log-wealth within 1e-6 of the optimum.
BcrpResult solve_bcrp(const std::vector<DensityVector>& history,
                      double gap_tol = 1e-6, long max_iter = 200000);

// EG with unit learning rate on the linearized per-model log-loss; must
// agree with obma_update on the weights to 1e-12.
SimplexWeights bma_hedge_equivalence_step(const SimplexWeights& w,
                                          const DensityVector& r);

// Minimal per-stacker trace needed by the runtime identity checks.
struct StackingTrace {
  Algorithm algorithm = Algorithm::OBMA;
  Mat log_r;           // T x K, log r_{t,k}
  Mat weights;         // T x K, pre-update weights w_{t-1} used at step t
  Vec log_ensemble;    // T, log(w . r) per step
  Vec final_weights;   // post-update weights after step T
};

// Exact telescoping identity for O-BMA traces: for every k,
//   sum_t log r_{t,k} - sum_t log(w_t . r_t) = log(w_{T,k} / w_{0,k}).
// Returns LHS_k - RHS_k per model.
Vec telescoping_regret_check(const StackingTrace& trace,
                             const SimplexWeights& prior);

// Index of the best single model by cumulative log-density, lowest index
// winning ties.
int best_model_index(const Mat& log_r);

}  // namespace obs
