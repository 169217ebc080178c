#include <doctest.h>

#include <algorithm>
#include <random>

#include "otrcl/eval.hpp"
#include "support.hpp"

using namespace otrcl;
using otrcl::testing::gaussian;

namespace {

Labels random_labels(std::size_t n, int k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Labels l(n);
  for (auto& x : l) x = static_cast<int>(rng() % static_cast<std::uint64_t>(k));
  return l;
}

// Sort-everything reference: AP = mean over relevant ranks of precision@rank.
double brute_map(const Matrix& q, const Matrix& g, const Labels& ql, const Labels& gl) {
  double total = 0.0;
  int counted = 0;
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    std::vector<std::pair<double, int>> order;
    for (Eigen::Index j = 0; j < g.rows(); ++j) {
      const double c = q.row(i).dot(g.row(j)) / (q.row(i).norm() * g.row(j).norm());
      order.push_back({-c, static_cast<int>(j)});
    }
    std::sort(order.begin(), order.end());
    double sum = 0.0;
    int hits = 0;
    for (std::size_t r = 0; r < order.size(); ++r)
      if (gl[static_cast<std::size_t>(order[r].second)] == ql[static_cast<std::size_t>(i)]) {
        ++hits;
        sum += static_cast<double>(hits) / static_cast<double>(r + 1);
      }
    if (hits == 0) continue;
    total += sum / hits;
    ++counted;
  }
  return total / counted;
}

}  // namespace

TEST_CASE("all relevant gallery gives AP one") {
  const Matrix q = gaussian(1, 3, 1), g = gaussian(5, 3, 2);
  CHECK(map_score(q, g, {2}, {2, 2, 2, 2, 2}) == 1.0);
}

TEST_CASE("hand enumerated AP") {
  Matrix q(1, 2);
  q << 1, 0;
  Matrix g(3, 2);
  g << 1, 0, 1, 1, 0, 1;  // cosine order 0, 1, 2
  CHECK(map_score(q, g, {0}, {0, 1, 0}) == doctest::Approx(5.0 / 6.0).epsilon(1e-15));
}

TEST_CASE("map matches a brute-force oracle exactly") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Matrix q = gaussian(20, 4, 100 + seed), g = gaussian(30, 4, 200 + seed);
    const Labels ql = random_labels(20, 3, 300 + seed), gl = random_labels(30, 3, 400 + seed);
    CHECK(map_score(q, g, ql, gl) == brute_map(q, g, ql, gl));
  }
}

TEST_CASE("queries without relevant items are excluded") {
  Matrix q(2, 2), g(2, 2);
  q << 1, 0, 0, 1;
  g << 1, 0, 0, 1;
  const auto aps = average_precisions(q, g, {0, 5}, {0, 1});
  CHECK(aps[0].has_value());
  CHECK_FALSE(aps[1].has_value());
  CHECK(map_score(q, g, {0, 5}, {0, 1}) == 1.0);
  CHECK_THROWS_AS(map_score(q, g, {4, 5}, {0, 1}), EvaluationError);
}

TEST_CASE("map is invariant to a common positive rescale") {
  const Matrix q = gaussian(15, 5, 7), g = gaussian(25, 5, 8);
  const Labels ql = random_labels(15, 4, 9), gl = random_labels(25, 4, 10);
  CHECK(map_score(q, g, ql, gl) == doctest::Approx(map_score(q * 3.0, g * 3.0, ql, gl)).epsilon(1e-15));
}

TEST_CASE("perfect class separation gives map one") {
  Matrix z(6, 3);
  z << 1, 0.1, 0, 1, 0, 0.1, 0, 1, 0.1, 0.1, 1, 0, 0, 0, 1, 0.1, 0, 1;
  const Labels l{0, 0, 1, 1, 2, 2};
  const RetrievalResult r = evaluate_retrieval(z, z, l);
  CHECK(r.map_i2t == 1.0);
  CHECK(r.map_t2i == 1.0);
  Matrix mixed = z;
  mixed.row(1) << 0, 1, 0;
  CHECK(map_score(mixed, mixed, l, l) < 1.0);
}

TEST_CASE("identical modalities give symmetric directions") {
  const Matrix z = gaussian(20, 4, 11);
  const RetrievalResult r = evaluate_retrieval(z, z, random_labels(20, 3, 12));
  CHECK(r.map_i2t == r.map_t2i);
  CHECK(r.mean() == r.map_i2t);
}

TEST_CASE("class precision pools per class") {
  Matrix q(2, 2), g(4, 2);
  q << 1, 0, 0, 1;
  g << 1, 0, 0.9, 0.1, 0.1, 0.9, 0, 1;
  // Each query takes the top two; one of the two matches its class.
  CHECK(class_precision(q, g, {0, 1}, {0, 1, 0, 1}) == 0.5);
  CHECK(class_precision(q, g, {0, 1}, {0, 0, 1, 1}) == 1.0);
}

TEST_CASE("correction accuracy") {
  const Labels truth{0, 1, 2, 1};
  Matrix exact = Matrix::Zero(4, 3);
  for (int i = 0; i < 4; ++i) exact(i, truth[static_cast<std::size_t>(i)]) = 1.0;
  CorrectionAccuracy a = correction_accuracy(exact, truth, exact);
  CHECK(a.assigned == 1.0);
  CHECK(a.overall == 1.0);

  a = correction_accuracy(Matrix::Zero(4, 3), truth, exact);
  CHECK_FALSE(a.assigned.has_value());
  CHECK(a.assigned_count == 0);

  // Planted: rows 0 and 2 corrected (one right, one wrong), rows 1 and 3 unassigned.
  Matrix planted = Matrix::Zero(4, 3);
  planted(0, 0) = 0.7;
  planted(2, 1) = 0.4;
  planted(3, 1) = 1e-7;
  Matrix effective = exact;
  effective.row(2) << 0, 1, 0;
  effective.row(3) << 1, 0, 0;
  a = correction_accuracy(planted, truth, effective);
  CHECK(a.assigned_count == 2);
  CHECK(*a.assigned == 0.5);
  CHECK(a.overall == 0.5);
}
