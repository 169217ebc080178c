#pragma once

#include <vector>

#include "otrcl/types.hpp"

namespace otrcl {

/// Dense cost matrix with finite, nonnegative entries.
class CostMatrix {
 public:
  /// Throws std::invalid_argument on an empty, non-finite or negative input.
  explicit CostMatrix(Matrix values);

  const Matrix& values() const { return values_; }
  Eigen::Index rows() const { return values_.rows(); }
  Eigen::Index cols() const { return values_.cols(); }
  double operator()(Eigen::Index i, Eigen::Index j) const { return values_(i, j); }

  /// Shifts by the minimum entry and divides by the resulting maximum, so
  /// entries land in [0, 1]. Accepts negative input. A constant matrix maps to zeros.
  static CostMatrix normalized(const Matrix& raw);

 private:
  Matrix values_;
};

/// Nonnegative mass vector with positive total. Need not sum to one.
class Marginal {
 public:
  explicit Marginal(Vector weights);
  static Marginal uniform(Eigen::Index n, double total = 1.0);

  const Vector& weights() const { return weights_; }
  Eigen::Index size() const { return weights_.size(); }
  double total() const { return weights_.sum(); }

 private:
  Vector weights_;
};

struct SinkhornParams {
  double epsilon = 0.1;
  int max_iters = 5000;
  double tol = 1e-6;
  // Marginal violation is checked every this many iterations.
  int check_every = 10;
  // Project the final iterate onto the transport polytope (rescale
  // overfull rows and columns, then spread the deficit as a rank-one term).
  bool round_to_marginals = true;
};

struct TransportPlan {
  Matrix values;
  Vector row_marginal;
  Vector col_marginal;
  bool converged = false;
  int iterations = 0;
  double marginal_error = 0.0;  // L-inf over rows and columns, before rounding
};

/// Entropic OT by log-domain Sinkhorn-Knopp scaling.
///
/// The returned plan is diag(u) exp(-C/eps) diag(v); u and v are carried as
/// log potentials so that small eps does not underflow. Iteration stops once
/// the L-inf marginal violation falls to params.tol, checked every
/// params.check_every iterations; reaching max_iters is reported through
/// `converged`, not thrown. Marginal entries may be zero. With
/// params.round_to_marginals the returned plan meets both marginals up to
/// floating-point rounding.
TransportPlan sinkhorn(const CostMatrix& cost, const Marginal& alpha, const Marginal& beta,
                       const SinkhornParams& params = {});

/// Frobenius product <plan, cost>.
double ot_objective(const Matrix& plan, const Matrix& cost);

struct AssignmentSolution {
  std::vector<int> permutation;  // row i -> column permutation[i]
  double objective = 0.0;        // (1/n) sum_i cost(i, permutation[i])
};

/// Exhaustive search over permutations; exact for uniform square OT. n <= 8.
AssignmentSolution exact_ot_oracle(const CostMatrix& cost);

}  // namespace otrcl
