#pragma once

#include <span>
#include <utility>
#include <vector>

#include "otrcl/types.hpp"

namespace otrcl {

/// Jensen-Shannon divergence (natural log), in [0, ln 2].
double jsd(std::span<const double> p, std::span<const double> q);
double jsd(const Vector& p, const Vector& q);

/// Cosine similarity of two nonzero vectors.
double cosine(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b);

/// Cosine affinely mapped to [0, 1].
inline double shifted_cosine(double cos) { return 0.5 * (1.0 + cos); }

/// Class-balanced set of samples whose two modalities agree most.
struct ConfidentSet {
  std::vector<std::vector<int>> per_class;
  int size_per_class = 0;

  /// Members in class order, then rank order within a class.
  std::vector<int> members() const;
  std::size_t size() const;
};

/// Tentative class of each sample is the argmax of the modality-averaged
/// prediction; within a class the size_per_class samples with the smallest
/// cross-modal JSD are kept. Classes short of members are topped up, in class
/// order, with the lowest-JSD samples not yet selected anywhere.
ConfidentSet select_confident(const Matrix& pred_v, const Matrix& pred_t, int size_per_class);

/// Exact cosine k-nearest neighbours within one modality, self excluded.
struct NeighborIndex {
  IndexMatrix indices;  // N x k
  Matrix similarities;  // N x k raw cosine, descending per row
};

NeighborIndex knn(const Matrix& embeddings, int k);

/// Default neighbourhood size: max(2, round(0.005 N)), capped at N-1.
int default_neighbors(Eigen::Index n);

/// Cross-modal consistency (C_v, C_t) of sample i against its closest
/// confident pair in each modality, using shifted cosines. The denominator is
/// clamped below at 1e-3.
std::pair<double, double> modal_consistency(Eigen::Index i, const ConfidentSet& conf,
                                            const Matrix& z_v, const Matrix& z_t);

/// Neighbour-vote transport cost. Entries are -log of the blended score and
/// may be negative (score above 1); use CostMatrix::normalized before solving.
Matrix semantic_cost(const ConfidentSet& conf, const NeighborIndex& nbrs_v,
                     const NeighborIndex& nbrs_t, const Matrix& targets, const Matrix& z_v,
                     const Matrix& z_t);

/// Momentum update of soft targets toward the nearest-prototype one-hot.
Matrix update_targets(const Matrix& targets, const Matrix& prototypes, const Matrix& z_v,
                      const Matrix& z_t, double gamma);

/// Cross-entropy of both modalities against (possibly unnormalized) soft
/// targets: -(1/N) sum_i t_i . (log p_v + log p_t). Logs are clamped at 1e-12.
double soft_cross_entropy(const Matrix& targets, const Matrix& pred_v, const Matrix& pred_t);

/// Corrected-label loss; `scaled_labels` is N * Y_hat.
inline double plc_loss(const Matrix& scaled_labels, const Matrix& pred_v, const Matrix& pred_t) {
  return soft_cross_entropy(scaled_labels, pred_v, pred_t);
}

}  // namespace otrcl
