#pragma once

#include <Eigen/Dense>

#include "obs/errors.hpp"

namespace obs {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// A point on the probability simplex: entries nonnegative, summing to one.
// Construction renormalizes to absorb rounding drift; inputs that are not
// close to a simplex point (negative entries, sum off by more than 1e-9
// before renormalization is requested explicitly) are rejected.
class SimplexWeights {
 public:
  explicit SimplexWeights(Vec values);

  static SimplexWeights uniform(int k);
  // Renormalizes a nonnegative vector with positive sum onto the simplex.
  static SimplexWeights normalized(Vec values);

  const Vec& values() const { return values_; }
  int size() const { return static_cast<int>(values_.size()); }
  double operator[](int i) const { return values_[i]; }

 private:
  Vec values_;
};

// Per-model one-step predictive density values ("price relatives").
// Strictly positive and finite.
class DensityVector {
 public:
  explicit DensityVector(Vec values);

  const Vec& values() const { return values_; }
  int size() const { return static_cast<int>(values_.size()); }
  double operator[](int i) const { return values_[i]; }

 private:
  Vec values_;
};

// Symmetric positive-definite metric, validated by Cholesky.
class MetricMatrix {
 public:
  explicit MetricMatrix(Mat entries);

  static MetricMatrix identity(int k);

  const Mat& entries() const { return entries_; }
  const Eigen::LLT<Mat>& llt() const { return llt_; }
  int size() const { return static_cast<int>(entries_.rows()); }

 private:
  Mat entries_;
  Eigen::LLT<Mat> llt_;
};

// Euclidean projection onto the simplex via sort-and-threshold; exact up to
// rounding, O(K log K).
SimplexWeights project_simplex_euclidean(const Vec& v);

// argmin_{w in simplex} (w - v)^T A (w - v), solved by an active-set method
// on the KKT system (exact for this QP; K is small). KKT residual of the
// returned point is at most 1e-8 or a NumericError is thrown.
SimplexWeights project_simplex_metric(const Vec& v, const MetricMatrix& a);

struct FloorResult {
  DensityVector densities;
  bool floored;  // whether any entry was raised to the floor
};

// Clamp densities below: output_k = max(p_k, floor).
FloorResult floor_densities(const Vec& p, double floor);

}  // namespace obs
