#pragma once

#include "otrcl/ot_core.hpp"
#include "otrcl/semantic_align.hpp"

namespace otrcl {

/// Softmax over confident members of -(1 - cos(z_i, z_g)) / tau2. Rows of
/// `z` are queries; confident members index rows of `z_conf_source`.
Matrix relation_scores(const Matrix& z, const ConfidentSet& conf, const Matrix& z_conf_source,
                       double tau2);

/// Pairwise JSD between visual relation rows and text relation rows.
CostMatrix relation_cost(const Matrix& r_v, const Matrix& r_t);

struct MatchingMatrix {
  Matrix values;  // marginals 1/N on both sides
  bool converged = false;
  double marginal_error = 0.0;
};

/// Cross-modal matching with uniform 1/N marginals.
MatchingMatrix solve_matching(const CostMatrix& cost, const SinkhornParams& params = {});

struct BhgTerms {
  double loss = 0.0;
  Matrix grad_v;  // dL/dz_v, B x L
  Matrix grad_t;  // dL/dz_t, B x L
};

/// Matching-weighted bidirectional InfoNCE over one batch.
///
/// Visual-to-text targets are the row-normalized matching, text-to-visual
/// targets the column-normalized one. A row whose matching mass is zero is
/// skipped and that direction is averaged over the remaining rows. The
/// matching is a constant; gradients flow only into the embeddings.
BhgTerms bhg_terms(const Matrix& matching, const Matrix& z_v, const Matrix& z_t, double tau3);

inline double bhg_loss(const Matrix& matching, const Matrix& z_v, const Matrix& z_t, double tau3) {
  return bhg_terms(matching, z_v, z_t, tau3).loss;
}

}  // namespace otrcl
