#pragma once

#include "otrcl/ot_core.hpp"

namespace otrcl {

/// Label correction as partial transport of `mass` units between N samples
/// (uniform 1/N each) and K classes (prior `class_prior`).
struct PartialOTProblem {
  PartialOTProblem(CostMatrix cost, double mass, Vector class_prior);

  CostMatrix cost;  // N x K
  double mass;      // s in [0, 1]
  Vector class_prior;
};

struct AugmentedProblem {
  CostMatrix cost;  // (N+1) x (K+1), zero slack row and column
  Marginal row;     // [1/N, ..., 1/N, 1-s]
  Marginal col;     // [r, 1-s]
};

/// Equal-mass OT equivalent of the partial problem. Slack variables live in
/// the appended row and column.
AugmentedProblem augment(const PartialOTProblem& problem);

struct SoftLabelMatrix {
  Matrix values;               // N * Y_hat; row sums <= 1
  double assigned_mass = 0.0;  // (1/N) * sum(values)
  bool converged = false;
  double marginal_error = 0.0;
};

/// Solves the augmented problem with Sinkhorn and returns the rescaled
/// sample-by-class block.
///
/// Entropic smoothing leaks some mass into the zero-cost slack corner, which
/// inflates the block total above s. The block is scaled back to exactly s
/// mass; scaling down keeps every row and column bound satisfied.
SoftLabelMatrix solve_partial(const PartialOTProblem& problem, const SinkhornParams& params = {});

struct MassSchedule {
  double s_start = 0.2;
  double s_end = 0.8;
  int total_epochs = 1;

  void validate() const;
};

/// Linear interpolation from s_start (epoch 0) to s_end (last epoch).
double mass_at(const MassSchedule& schedule, int epoch);

/// Class histogram of the given labels, normalized to sum to one. Classes
/// with no members get a small floor so the prior stays strictly positive.
Vector estimate_class_prior(const Labels& labels, int num_classes);

}  // namespace otrcl
