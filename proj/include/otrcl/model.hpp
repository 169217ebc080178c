#pragma once

#include <cstdint>
#include <random>

#include "otrcl/types.hpp"

namespace otrcl {

struct ModelDims {
  int dim_v = 32;
  int dim_t = 32;
  int hidden = 64;
  int embed = 16;
  int classes = 10;

  bool operator==(const ModelDims&) const = default;
};

/// Two projection heads (affine -> ReLU -> affine) and K class prototypes,
/// all stored in one flat parameter vector.
class ModelState {
 public:
  using MatrixMap = Eigen::Map<Matrix>;
  using ConstMatrixMap = Eigen::Map<const Matrix>;
  using VectorMap = Eigen::Map<Vector>;
  using ConstVectorMap = Eigen::Map<const Vector>;

  struct Head {
    MatrixMap w1;  // hidden x input
    VectorMap b1;
    MatrixMap w2;  // embed x hidden
    VectorMap b2;
  };
  struct ConstHead {
    ConstMatrixMap w1;
    ConstVectorMap b1;
    ConstMatrixMap w2;
    ConstVectorMap b2;
  };

  ModelState(ModelDims dims, double tau1 = 1.0);

  /// He-scaled Gaussian head weights, zero biases, prototypes ~ N(0, 1/L).
  static ModelState initialize(ModelDims dims, std::mt19937_64& rng, double tau1 = 1.0);

  const ModelDims& dims() const { return dims_; }
  double tau1() const { return tau1_; }
  Vector& params() { return params_; }
  const Vector& params() const { return params_; }

  Head head(Modality m);
  ConstHead head(Modality m) const;
  MatrixMap prototypes();
  ConstMatrixMap prototypes() const;

  int input_dim(Modality m) const { return m == Modality::kVisual ? dims_.dim_v : dims_.dim_t; }
  static Eigen::Index param_count(const ModelDims& dims);

 private:
  Eigen::Index head_offset(Modality m) const;
  Eigen::Index prototype_offset() const;

  ModelDims dims_;
  double tau1_;
  Vector params_;
};

/// Embedding of one feature vector.
Vector encode(const ModelState& state, const Vector& x, Modality modality);

/// Embeddings of a batch of rows.
Matrix encode_batch(const ModelState& state, const Matrix& x, Modality modality);

/// softmax_k(mu_k . z / tau1).
Vector class_probs(const Vector& z, const Matrix& prototypes, double tau1);
Matrix class_probs_batch(const Matrix& z, const Matrix& prototypes, double tau1);

/// Cross-entropy against soft targets on both modalities.
double ce_loss(const Matrix& targets, const Matrix& pred_v, const Matrix& pred_t);

inline double total_loss(double plc, double bhg, double lambda) { return plc + lambda * bhg; }

/// What one gradient step optimizes. The label term is cross-entropy
/// against `targets` (noisy one-hots, or N * Y_hat rows); the alignment term
/// is the matching-weighted InfoNCE, weighted by lambda. Both the targets and
/// the matching are constants.
struct BatchObjective {
  const Matrix* targets = nullptr;   // B x K
  const Matrix* matching = nullptr;  // B x B, or null for no alignment term
  double lambda = 0.0;
  double tau3 = 1.0;
};

struct LossGrad {
  double label_loss = 0.0;
  double align_loss = 0.0;
  double loss = 0.0;
  Vector grad;  // same layout as ModelState::params
};

/// Loss and exact gradient for a batch; batch losses average over rows.
/// Throws std::runtime_error on a non-finite loss or gradient.
LossGrad loss_and_grad(const ModelState& state, const Matrix& x_v, const Matrix& x_t,
                       const BatchObjective& objective);

struct AdamState {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  Vector m;
  Vector v;

  void reset(Eigen::Index n);
};

void adam_step(Vector& params, const Vector& grad, AdamState& adam);

}  // namespace otrcl
