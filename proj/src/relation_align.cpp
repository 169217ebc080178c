#include "otrcl/relation_align.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "otrcl/parallel.hpp"

namespace otrcl {
namespace {

// Row-wise log-softmax.
Matrix row_log_softmax(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    double hi = logits.row(i).maxCoeff();
    double acc = 0.0;
    for (Eigen::Index j = 0; j < logits.cols(); ++j) acc += std::exp(logits(i, j) - hi);
    double lse = hi + std::log(acc);
    out.row(i) = logits.row(i).array() - lse;
  }
  return out;
}

}  // namespace

Matrix relation_scores(const Matrix& z, const ConfidentSet& conf, const Matrix& z_conf_source,
                       double tau2) {
  if (!(tau2 > 0.0)) throw std::invalid_argument("tau2 must be positive");
  const std::vector<int> members = conf.members();
  if (members.empty()) throw std::invalid_argument("confident set is empty");
  if (z.cols() != z_conf_source.cols()) throw std::invalid_argument("embedding widths differ");

  Matrix anchors(static_cast<Eigen::Index>(members.size()), z.cols());
  for (std::size_t j = 0; j < members.size(); ++j) {
    if (members[j] < 0 || members[j] >= z_conf_source.rows())
      throw std::invalid_argument("confident index out of range");
    anchors.row(static_cast<Eigen::Index>(j)) = z_conf_source.row(members[j]);
  }
  Matrix logits(z.rows(), anchors.rows());
  for (Eigen::Index i = 0; i < z.rows(); ++i)
    for (Eigen::Index j = 0; j < anchors.rows(); ++j)
      logits(i, j) = -(1.0 - cosine(z.row(i).transpose(), anchors.row(j).transpose())) / tau2;
  return row_log_softmax(logits).array().exp();
}

CostMatrix relation_cost(const Matrix& r_v, const Matrix& r_t) {
  if (r_v.cols() != r_t.cols())
    throw std::invalid_argument("relation widths differ: " + std::to_string(r_v.cols()) + " vs " +
                                std::to_string(r_t.cols()));
  Matrix cost(r_v.rows(), r_t.rows());
  parallel_for(static_cast<std::size_t>(r_v.rows()), [&](std::size_t row) {
    const auto i = static_cast<Eigen::Index>(row);
    const Vector p = r_v.row(i).transpose();
    for (Eigen::Index j = 0; j < r_t.rows(); ++j) cost(i, j) = jsd(p, Vector(r_t.row(j).transpose()));
  });
  return CostMatrix(std::move(cost));
}

MatchingMatrix solve_matching(const CostMatrix& cost, const SinkhornParams& params) {
  if (cost.rows() != cost.cols()) throw std::invalid_argument("matching cost must be square");
  const Eigen::Index n = cost.rows();
  TransportPlan plan = sinkhorn(cost, Marginal::uniform(n), Marginal::uniform(n), params);
  return {std::move(plan.values), plan.converged, plan.marginal_error};
}

BhgTerms bhg_terms(const Matrix& matching, const Matrix& z_v, const Matrix& z_t, double tau3) {
  const Eigen::Index b = z_v.rows();
  if (!(tau3 > 0.0)) throw std::invalid_argument("tau3 must be positive");
  if (z_t.rows() != b || z_t.cols() != z_v.cols() || matching.rows() != b || matching.cols() != b)
    throw std::invalid_argument("matching and batch embeddings disagree in shape");

  const Matrix logits = z_v * z_t.transpose() / tau3;
  const Matrix log_v2t = row_log_softmax(logits);
  const Matrix log_t2v = row_log_softmax(logits.transpose());

  Matrix grad_logits = Matrix::Zero(b, b);
  BhgTerms out;

  // Visual queries: targets are matching rows.
  {
    Eigen::Index valid = 0;
    for (Eigen::Index i = 0; i < b; ++i)
      if (matching.row(i).sum() > 0.0) ++valid;
    for (Eigen::Index i = 0; valid > 0 && i < b; ++i) {
      double mass = matching.row(i).sum();
      if (!(mass > 0.0)) continue;
      double scale = 1.0 / static_cast<double>(valid);
      for (Eigen::Index j = 0; j < b; ++j) {
        double target = matching(i, j) / mass;
        if (target != 0.0) out.loss -= scale * target * log_v2t(i, j);
        grad_logits(i, j) += scale * (std::exp(log_v2t(i, j)) - target);
      }
    }
  }
  // Text queries: targets are matching columns.
  {
    Eigen::Index valid = 0;
    for (Eigen::Index j = 0; j < b; ++j)
      if (matching.col(j).sum() > 0.0) ++valid;
    for (Eigen::Index j = 0; valid > 0 && j < b; ++j) {
      double mass = matching.col(j).sum();
      if (!(mass > 0.0)) continue;
      double scale = 1.0 / static_cast<double>(valid);
      for (Eigen::Index i = 0; i < b; ++i) {
        double target = matching(i, j) / mass;
        if (target != 0.0) out.loss -= scale * target * log_t2v(j, i);
        grad_logits(i, j) += scale * (std::exp(log_t2v(j, i)) - target);
      }
    }
  }
  out.grad_v = grad_logits * z_t / tau3;
  out.grad_t = grad_logits.transpose() * z_v / tau3;
  return out;
}

}  // namespace otrcl
