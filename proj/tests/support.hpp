#pragma once

#include <algorithm>
#include <cmath>
#include <random>

#include "otrcl/model.hpp"

namespace otrcl::testing {

inline Matrix gaussian(Eigen::Index r, Eigen::Index c, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, scale);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = g(rng);
  return m;
}

struct GradCheck {
  double max_rel_error = 0.0;
  Eigen::Index worst = -1;
};

// Central differences on every parameter. Entries where both gradients are
// below `floor` in magnitude are compared absolutely against it.
inline GradCheck finite_difference_check(const ModelState& state, const Matrix& x_v, const Matrix& x_t,
                                         const BatchObjective& objective, double h = 1e-5,
                                         double floor = 1e-6) {
  const Vector analytic = loss_and_grad(state, x_v, x_t, objective).grad;
  ModelState probe = state;
  GradCheck out;
  for (Eigen::Index p = 0; p < analytic.size(); ++p) {
    const double saved = probe.params()(p);
    probe.params()(p) = saved + h;
    const double up = loss_and_grad(probe, x_v, x_t, objective).loss;
    probe.params()(p) = saved - h;
    const double down = loss_and_grad(probe, x_v, x_t, objective).loss;
    probe.params()(p) = saved;
    const double fd = (up - down) / (2.0 * h);
    const double scale = std::max({std::abs(fd), std::abs(analytic(p)), floor});
    const double rel = std::abs(fd - analytic(p)) / scale;
    if (rel > out.max_rel_error) {
      out.max_rel_error = rel;
      out.worst = p;
    }
  }
  return out;
}

}  // namespace otrcl::testing
