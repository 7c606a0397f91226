#include <doctest.h>

#include <cmath>

#include "obs/rng.hpp"
#include "obs/simplex.hpp"

using namespace obs;

namespace {

double quad_objective(const Vec& w, const Vec& v, const Mat& a) {
  const Vec d = w - v;
  return d.dot(a * d);
}

// Brute-force minimizer over the 1-simplex (K = 2) at a given resolution.
Vec grid_search_2d(const Vec& v, const Mat& a, double resolution) {
  double best = std::numeric_limits<double>::infinity();
  Vec best_w(2);
  for (double w1 = 0.0; w1 <= 1.0 + 1e-12; w1 += resolution) {
    Vec w(2);
    w << w1, 1.0 - w1;
    const double obj = quad_objective(w, v, a);
    if (obj < best) {
      best = obj;
      best_w = w;
    }
  }
  return best_w;
}

Vec grid_search_3d(const Vec& v, const Mat& a, double resolution) {
  double best = std::numeric_limits<double>::infinity();
  Vec best_w(3);
  for (double w1 = 0.0; w1 <= 1.0 + 1e-12; w1 += resolution)
    for (double w2 = 0.0; w2 <= 1.0 - w1 + 1e-12; w2 += resolution) {
      Vec w(3);
      w << w1, w2, 1.0 - w1 - w2;
      const double obj = quad_objective(w, v, a);
      if (obj < best) {
        best = obj;
        best_w = w;
      }
    }
  return best_w;
}

Vec random_vec(int k, Rng& rng, double scale = 2.0) {
  Vec v(k);
  for (int i = 0; i < k; ++i) v[i] = scale * rng.normal();
  return v;
}

Mat random_spd(int k, Rng& rng) {
  Mat m(k, k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) m(i, j) = rng.normal();
  return m * m.transpose() + 0.1 * Mat::Identity(k, k);
}

}  // namespace

TEST_CASE("euclidean projection: identity on simplex points") {
  Vec v(2);
  v << 0.3, 0.7;
  const auto w = project_simplex_euclidean(v);
  CHECK(w[0] == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(w[1] == doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("euclidean projection: symmetric point") {
  Vec v(2);
  v << 0.6, 0.6;
  const auto w = project_simplex_euclidean(v);
  CHECK(w[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(w[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("euclidean projection: clamps to a vertex") {
  Vec v(2);
  v << 1.2, -0.2;
  const auto w = project_simplex_euclidean(v);
  CHECK(w[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(w[1] == doctest::Approx(0.0).epsilon(1e-12));
  // Dense grid confirmation of the sort-and-threshold result.
  const Vec oracle = grid_search_2d(v, Mat::Identity(2, 2), 1e-4);
  CHECK(std::abs(w[0] - oracle[0]) < 2e-4);
}

TEST_CASE("euclidean projection: rejects non-finite input") {
  Vec v(2);
  v << std::nan(""), 0.3;
  CHECK_THROWS_AS(project_simplex_euclidean(v), InvalidInput);
}

TEST_CASE("euclidean projection: idempotent and simplex-valid on random input") {
  Rng rng(7);
  for (int rep = 0; rep < 200; ++rep) {
    const int k = 2 + static_cast<int>(rng.next_u64() % 7);
    const Vec v = random_vec(k, rng);
    const auto w = project_simplex_euclidean(v);
    CHECK(w.values().minCoeff() >= 0.0);
    CHECK(w.values().sum() == doctest::Approx(1.0).epsilon(1e-12));
    const auto w2 = project_simplex_euclidean(w.values());
    CHECK((w2.values() - w.values()).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("metric projection: identity metric reduces to Euclidean") {
  Vec v(2);
  v << 0.6, 0.6;
  const auto w = project_simplex_metric(v, MetricMatrix::identity(2));
  CHECK(w[0] == doctest::Approx(0.5).epsilon(1e-10));
  CHECK(w[1] == doctest::Approx(0.5).epsilon(1e-10));
}

TEST_CASE("metric projection: feasible point is its own projection") {
  Rng rng(11);
  Vec v(3);
  v << 0.2, 0.5, 0.3;
  const MetricMatrix a(random_spd(3, rng));
  const auto w = project_simplex_metric(v, a);
  CHECK((w.values() - v).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("metric projection: anisotropic case matches grid oracle") {
  Vec v(2);
  v << 2.0, 0.0;
  Mat a = Mat::Zero(2, 2);
  a(0, 0) = 1.0;
  a(1, 1) = 4.0;
  const auto w = project_simplex_metric(v, MetricMatrix(a));
  const Vec oracle = grid_search_2d(v, a, 1e-5);
  CHECK(std::abs(w[0] - oracle[0]) < 2e-5);
}

TEST_CASE("metric projection: scaled identity equals Euclidean projection") {
  Rng rng(13);
  for (double c : {0.1, 1.0, 42.0}) {
    const Vec v = random_vec(4, rng);
    const auto we = project_simplex_euclidean(v);
    const auto wm =
        project_simplex_metric(v, MetricMatrix(c * Mat::Identity(4, 4)));
    CHECK((we.values() - wm.values()).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("metric projection: objective no worse than vertices or Euclidean point") {
  Rng rng(17);
  for (int rep = 0; rep < 50; ++rep) {
    const int k = 2 + static_cast<int>(rng.next_u64() % 4);
    const Vec v = random_vec(k, rng);
    const Mat a = random_spd(k, rng);
    const auto w = project_simplex_metric(v, MetricMatrix(a));
    const double obj = quad_objective(w.values(), v, a);
    for (int i = 0; i < k; ++i) {
      Vec vertex = Vec::Zero(k);
      vertex[i] = 1.0;
      CHECK(obj <= quad_objective(vertex, v, a) + 1e-9);
    }
    const auto we = project_simplex_euclidean(v);
    CHECK(obj <= quad_objective(we.values(), v, a) + 1e-9);
  }
}

TEST_CASE("metric projection: random instances match grid oracle") {
  Rng rng(19);
  for (int rep = 0; rep < 20; ++rep) {
    const Vec v = random_vec(3, rng);
    const Mat a = random_spd(3, rng);
    const auto w = project_simplex_metric(v, MetricMatrix(a));
    const Vec oracle = grid_search_3d(v, a, 1e-3);
    CHECK(quad_objective(w.values(), v, a) <=
          quad_objective(oracle, v, a) + 1e-6);
  }
}

TEST_CASE("metric matrix: rejects asymmetric and indefinite input") {
  Mat bad(2, 2);
  bad << 1.0, 0.5, -0.5, 1.0;
  CHECK_THROWS_AS(MetricMatrix{bad}, InvalidInput);
  Mat indef(2, 2);
  indef << 1.0, 2.0, 2.0, 1.0;
  CHECK_THROWS_AS(MetricMatrix{indef}, InvalidInput);
}

TEST_CASE("floor_densities") {
  Vec p(2);
  p << 0.2, 0.0;
  const auto res = floor_densities(p, 1e-300);
  CHECK(res.floored);
  CHECK(res.densities[0] == 0.2);
  CHECK(res.densities[1] == 1e-300);

  Vec q(2);
  q << 0.2, 0.1;
  const auto res2 = floor_densities(q, 1e-300);
  CHECK(!res2.floored);
  CHECK(res2.densities[1] == 0.1);

  Vec bad(2);
  bad << std::nan(""), 0.1;
  CHECK_THROWS_AS(floor_densities(bad, 1e-300), InvalidInput);
}

TEST_CASE("simplex weights: invariants") {
  CHECK_THROWS_AS(SimplexWeights(Vec::Constant(2, 0.6)), InvalidInput);
  Vec neg(2);
  neg << 1.5, -0.5;
  CHECK_THROWS_AS(SimplexWeights{neg}, InvalidInput);
  const auto u = SimplexWeights::uniform(5);
  CHECK(u.values().sum() == doctest::Approx(1.0));
}
