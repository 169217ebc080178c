#include "otrcl/partial_ot.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace otrcl {

PartialOTProblem::PartialOTProblem(CostMatrix cost_, double mass_, Vector class_prior_)
    : cost(std::move(cost_)), mass(mass_), class_prior(std::move(class_prior_)) {
  if (!(mass >= 0.0 && mass <= 1.0)) throw std::invalid_argument("transported mass must lie in [0, 1]");
  if (class_prior.size() != cost.cols())
    throw std::invalid_argument("class prior has " + std::to_string(class_prior.size()) +
                                " entries for " + std::to_string(cost.cols()) + " classes");
  if ((class_prior.array() < 0.0).any() || std::abs(class_prior.sum() - 1.0) > 1e-9)
    throw std::invalid_argument("class prior must be a probability vector");
}

AugmentedProblem augment(const PartialOTProblem& problem) {
  const Eigen::Index n = problem.cost.rows();
  const Eigen::Index k = problem.cost.cols();
  const double slack = 1.0 - problem.mass;

  Matrix cost = Matrix::Zero(n + 1, k + 1);
  cost.topLeftCorner(n, k) = problem.cost.values();

  Vector row(n + 1);
  row.head(n).setConstant(1.0 / static_cast<double>(n));
  row(n) = slack;
  Vector col(k + 1);
  col.head(k) = problem.class_prior;
  col(k) = slack;
  return {CostMatrix(std::move(cost)), Marginal(std::move(row)), Marginal(std::move(col))};
}

SoftLabelMatrix solve_partial(const PartialOTProblem& problem, const SinkhornParams& params) {
  const Eigen::Index n = problem.cost.rows();
  const Eigen::Index k = problem.cost.cols();
  SoftLabelMatrix out;
  if (problem.mass == 0.0) {
    out.values = Matrix::Zero(n, k);
    out.converged = true;
    return out;
  }
  AugmentedProblem aug = augment(problem);
  TransportPlan plan = sinkhorn(aug.cost, aug.row, aug.col, params);
  out.converged = plan.converged;
  out.marginal_error = plan.marginal_error;

  Matrix block = plan.values.topLeftCorner(n, k);
  const double block_mass = block.sum();
  if (block_mass > problem.mass) block *= problem.mass / block_mass;
  out.values = block * static_cast<double>(n);
  out.assigned_mass = out.values.sum() / static_cast<double>(n);
  return out;
}

void MassSchedule::validate() const {
  if (!(0.0 <= s_start && s_start <= s_end && s_end <= 1.0))
    throw std::invalid_argument("mass schedule needs 0 <= s_start <= s_end <= 1");
  if (total_epochs < 1) throw std::invalid_argument("mass schedule needs at least one epoch");
}

double mass_at(const MassSchedule& schedule, int epoch) {
  schedule.validate();
  if (epoch < 0 || epoch >= schedule.total_epochs)
    throw std::invalid_argument("epoch " + std::to_string(epoch) + " outside schedule of " +
                                std::to_string(schedule.total_epochs) + " epochs");
  if (schedule.total_epochs == 1) return schedule.s_end;
  return schedule.s_start + (schedule.s_end - schedule.s_start) * static_cast<double>(epoch) /
                                static_cast<double>(schedule.total_epochs - 1);
}

Vector estimate_class_prior(const Labels& labels, int num_classes) {
  Vector counts = Vector::Constant(num_classes, 0.5);
  for (int c : labels) counts(c) += 1.0;
  return counts / counts.sum();
}

}  // namespace otrcl
