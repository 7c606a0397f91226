#include "obs/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace obs {

namespace {

bool all_finite(const Vec& v) { return v.allFinite(); }

}  // namespace

SimplexWeights::SimplexWeights(Vec values) : values_(std::move(values)) {
  if (values_.size() < 1) throw InvalidInput("SimplexWeights: K must be >= 1");
  if (!all_finite(values_)) throw InvalidInput("SimplexWeights: non-finite entry");
  if (values_.minCoeff() < -1e-12)
    throw InvalidInput("SimplexWeights: negative entry");
  values_ = values_.cwiseMax(0.0);
  const double s = values_.sum();
  if (std::abs(s - 1.0) > 1e-9)
    throw InvalidInput("SimplexWeights: entries do not sum to 1");
  values_ /= s;
}

SimplexWeights SimplexWeights::uniform(int k) {
  if (k < 1) throw InvalidInput("SimplexWeights::uniform: K must be >= 1");
  return SimplexWeights(Vec::Constant(k, 1.0 / k));
}

SimplexWeights SimplexWeights::normalized(Vec values) {
  if (values.size() < 1) throw InvalidInput("SimplexWeights: K must be >= 1");
  if (!values.allFinite()) throw InvalidInput("SimplexWeights: non-finite entry");
  if (values.minCoeff() < 0.0)
    throw InvalidInput("SimplexWeights: negative entry");
  const double s = values.sum();
  if (!(s > 0.0)) throw InvalidInput("SimplexWeights: zero sum");
  return SimplexWeights(values / s);
}

DensityVector::DensityVector(Vec values) : values_(std::move(values)) {
  if (values_.size() < 1) throw InvalidInput("DensityVector: K must be >= 1");
  if (!all_finite(values_)) throw InvalidInput("DensityVector: non-finite entry");
  if (values_.minCoeff() <= 0.0)
    throw InvalidInput("DensityVector: entries must be strictly positive");
}

MetricMatrix::MetricMatrix(Mat entries) : entries_(std::move(entries)) {
  if (entries_.rows() != entries_.cols() || entries_.rows() < 1)
    throw InvalidInput("MetricMatrix: must be square, K >= 1");
  if (!entries_.allFinite()) throw InvalidInput("MetricMatrix: non-finite entry");
  if ((entries_ - entries_.transpose()).cwiseAbs().maxCoeff() > 1e-9)
    throw InvalidInput("MetricMatrix: not symmetric");
  entries_ = 0.5 * (entries_ + entries_.transpose().eval());
  llt_.compute(entries_);
  if (llt_.info() != Eigen::Success)
    throw InvalidInput("MetricMatrix: not positive definite");
}

MetricMatrix MetricMatrix::identity(int k) {
  return MetricMatrix(Mat::Identity(k, k));
}

SimplexWeights project_simplex_euclidean(const Vec& v) {
  if (v.size() < 1) throw InvalidInput("project_simplex_euclidean: K >= 1");
  if (!v.allFinite()) throw InvalidInput("project_simplex_euclidean: non-finite input");

  const int k = static_cast<int>(v.size());
  std::vector<double> u(v.data(), v.data() + k);
  std::sort(u.begin(), u.end(), std::greater<double>());

  // Largest rho with u_rho - (cumsum - 1)/rho > 0.
  double cumsum = 0.0, tau = 0.0;
  int rho = 0;
  double running = 0.0;
  for (int i = 0; i < k; ++i) {
    running += u[i];
    const double t = (running - 1.0) / (i + 1);
    if (u[i] - t > 0.0) {
      rho = i + 1;
      cumsum = running;
    }
  }
  tau = (cumsum - 1.0) / rho;

  Vec w = (v.array() - tau).cwiseMax(0.0);
  return SimplexWeights::normalized(w);
}

namespace {

// KKT residual for min (w-v)^T A (w-v) on the simplex at w: with gradient
// g = 2A(w-v) and multiplier mu = -min over support of g, the residual is
// max(|1 - sum w|, complementarity and dual feasibility violations).
double metric_kkt_residual(const Vec& w, const Vec& v, const Mat& a) {
  const Vec g = 2.0 * a * (w - v);
  double mu = std::numeric_limits<double>::infinity();
  for (int i = 0; i < w.size(); ++i)
    if (w[i] > 1e-14) mu = std::min(mu, g[i]);
  double res = std::abs(w.sum() - 1.0);
  for (int i = 0; i < w.size(); ++i) {
    const double slack = g[i] - mu;  // must be >= 0, and 0 on the support
    res = std::max(res, -std::min(slack, 0.0));
    res = std::max(res, std::min(w[i], 1.0) * std::abs(std::min(slack, 0.0)));
    if (w[i] > 1e-14) res = std::max(res, w[i] * std::abs(slack));
  }
  return res;
}

}  // namespace

SimplexWeights project_simplex_metric(const Vec& v, const MetricMatrix& a) {
  const int k = static_cast<int>(v.size());
  if (a.size() != k) throw InvalidInput("project_simplex_metric: dimension mismatch");
  if (!v.allFinite()) throw InvalidInput("project_simplex_metric: non-finite input");
  if (k == 1) return SimplexWeights(Vec::Ones(1));

  const Mat& A = a.entries();

  // Feasible-point active set (Lawson-Hanson style): start from the
  // Euclidean projection and step toward the equality-constrained minimizer
  // of the current free set, clamping at the first coordinate that reaches
  // zero. Each step strictly decreases the objective, so the free-set
  // sequence terminates without cycling.
  Vec w = project_simplex_euclidean(v).values();
  std::vector<bool> free_set(k);
  for (int i = 0; i < k; ++i) free_set[i] = w[i] > 0.0;

  // Residual tolerances are relative to the gradient scale: ONS feeds
  // matrices whose norm grows with the stream length.
  const double grad_scale =
      std::max(1.0, 2.0 * (A.cwiseAbs().rowwise().sum().maxCoeff()) *
                        (1.0 + v.cwiseAbs().maxCoeff()));
  const double dual_tol = 1e-10 * grad_scale;
  const int max_iter = 100 * (k + 2);

  for (int iter = 0; iter < max_iter; ++iter) {
    std::vector<int> f;
    for (int i = 0; i < k; ++i)
      if (free_set[i]) f.push_back(i);
    const int nf = static_cast<int>(f.size());

    // Equality-constrained subproblem on F:
    //   [A(w - v)]_F = -(mu/2) 1,  1^T w_F = 1,  w_N = 0.
    Mat aff(nf, nf);
    Vec rhs(nf);
    for (int i = 0; i < nf; ++i) {
      for (int j = 0; j < nf; ++j) aff(i, j) = A(f[i], f[j]);
      double av = 0.0;
      for (int j = 0; j < k; ++j) av += A(f[i], j) * v[j];
      rhs[i] = av;  // (A v)_Fi
    }
    Eigen::LDLT<Mat> ldlt(aff);
    if (ldlt.info() != Eigen::Success)
      throw NumericError("project_simplex_metric: singular reduced system");
    const Vec y = ldlt.solve(rhs);           // A_FF^{-1} (A v)_F
    const Vec z = ldlt.solve(Vec::Ones(nf)); // A_FF^{-1} 1
    const double mu_half = (y.sum() - 1.0) / z.sum();
    const Vec wf = y - mu_half * z;

    double min_wf = 0.0;
    for (int i = 0; i < nf; ++i) min_wf = std::min(min_wf, wf[i]);

    if (min_wf >= -1e-12) {
      // Candidate is feasible: accept it, then test dual feasibility. On the
      // free set g_F = -2 mu_half, so mu = -2 mu_half is the equality
      // multiplier; bound entries need g_i - mu >= 0.
      w.setZero();
      for (int i = 0; i < nf; ++i) w[f[i]] = std::max(wf[i], 0.0);

      const Vec g = 2.0 * A * (w - v);
      const double mu = -2.0 * mu_half;
      int release = -1;
      double release_val = -dual_tol;
      for (int i = 0; i < k; ++i)
        if (!free_set[i] && g[i] - mu < release_val) {
          release_val = g[i] - mu;
          release = i;
        }
      if (release >= 0) {
        free_set[release] = true;
        continue;
      }

      const double res = metric_kkt_residual(w, v, A);
      if (res > 1e-8 * grad_scale)
        throw NumericError(
            "project_simplex_metric: KKT residual above tolerance", res);
      return SimplexWeights::normalized(w.cwiseMax(0.0));
    }

    // Partial step: advance until the first free coordinate hits zero, then
    // clamp it. alpha in (0, 1]; degenerate alpha = 0 just shrinks the set.
    double alpha = 1.0;
    int blocker = -1;
    for (int i = 0; i < nf; ++i)
      if (wf[i] < 0.0) {
        const double step = w[f[i]] / (w[f[i]] - wf[i]);
        if (step < alpha) {
          alpha = step;
          blocker = f[i];
        }
      }
    for (int i = 0; i < nf; ++i)
      w[f[i]] = (1.0 - alpha) * w[f[i]] + alpha * wf[i];
    if (blocker >= 0) {
      w[blocker] = 0.0;
      free_set[blocker] = false;
    }
  }
  throw NumericError("project_simplex_metric: active-set iteration cap reached",
                     metric_kkt_residual(w, v, A));
}

FloorResult floor_densities(const Vec& p, double floor) {
  if (!(floor > 0.0)) throw InvalidInput("floor_densities: floor must be positive");
  if (p.size() < 1) throw InvalidInput("floor_densities: K >= 1");
  for (int i = 0; i < p.size(); ++i) {
    if (std::isnan(p[i])) throw InvalidInput("floor_densities: NaN input");
    if (std::isinf(p[i])) throw InvalidInput("floor_densities: infinite input");
    if (p[i] < 0.0) throw InvalidInput("floor_densities: negative density");
  }
  Vec q = p.cwiseMax(floor);
  const bool floored = (q.array() != p.array()).any();
  return FloorResult{DensityVector(std::move(q)), floored};
}

}  // namespace obs
