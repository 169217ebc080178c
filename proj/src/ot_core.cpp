#include "otrcl/ot_core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace otrcl {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// log(sum_j exp(row[j])) over a strided view; -inf when every term is -inf.
template <typename Getter>
double log_sum_exp(Eigen::Index n, Getter&& term) {
  double hi = kNegInf;
  for (Eigen::Index j = 0; j < n; ++j) hi = std::max(hi, term(j));
  if (hi == kNegInf) return kNegInf;
  double acc = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) acc += std::exp(term(j) - hi);
  return hi + std::log(acc);
}

Vector log_of(const Vector& w) {
  Vector out(w.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) out(i) = w(i) > 0.0 ? std::log(w(i)) : kNegInf;
  return out;
}

}  // namespace

CostMatrix::CostMatrix(Matrix values) : values_(std::move(values)) {
  if (values_.rows() < 1 || values_.cols() < 1)
    throw std::invalid_argument("cost matrix must be at least 1x1");
  for (Eigen::Index i = 0; i < values_.rows(); ++i)
    for (Eigen::Index j = 0; j < values_.cols(); ++j) {
      double c = values_(i, j);
      if (!std::isfinite(c))
        throw std::invalid_argument("cost matrix has a non-finite entry at (" + std::to_string(i) +
                                    ", " + std::to_string(j) + ")");
      if (c < 0.0)
        throw std::invalid_argument("cost matrix has a negative entry at (" + std::to_string(i) +
                                    ", " + std::to_string(j) + ")");
    }
}

CostMatrix CostMatrix::normalized(const Matrix& raw) {
  if (raw.size() == 0) throw std::invalid_argument("cost matrix must be at least 1x1");
  if (!raw.allFinite()) throw std::invalid_argument("cost matrix has a non-finite entry");
  Matrix shifted = raw.array() - raw.minCoeff();
  double hi = shifted.maxCoeff();
  if (hi > 0.0) shifted /= hi;
  return CostMatrix(std::move(shifted));
}

Marginal::Marginal(Vector weights) : weights_(std::move(weights)) {
  if (weights_.size() < 1) throw std::invalid_argument("marginal must be nonempty");
  for (Eigen::Index i = 0; i < weights_.size(); ++i)
    if (!std::isfinite(weights_(i)) || weights_(i) < 0.0)
      throw std::invalid_argument("marginal entries must be finite and nonnegative");
  if (!(weights_.sum() > 0.0)) throw std::invalid_argument("marginal must have positive mass");
}

Marginal Marginal::uniform(Eigen::Index n, double total) {
  return Marginal(Vector::Constant(n, total / static_cast<double>(n)));
}

namespace {

void round_plan(Matrix& plan, const Vector& a, const Vector& b) {
  const Vector rows = plan.rowwise().sum();
  for (Eigen::Index i = 0; i < plan.rows(); ++i)
    if (rows(i) > a(i)) plan.row(i) *= a(i) / rows(i);
  const Vector cols = plan.colwise().sum().transpose();
  for (Eigen::Index j = 0; j < plan.cols(); ++j)
    if (cols(j) > b(j)) plan.col(j) *= b(j) / cols(j);
  const Vector err_a = (a - plan.rowwise().sum()).cwiseMax(0.0);
  const Vector err_b = (b - plan.colwise().sum().transpose()).cwiseMax(0.0);
  const double deficit = err_a.sum();
  if (deficit > 0.0) plan.noalias() += err_a * err_b.transpose() / deficit;
}

}  // namespace

TransportPlan sinkhorn(const CostMatrix& cost, const Marginal& alpha, const Marginal& beta,
                       const SinkhornParams& params) {
  const Eigen::Index m = cost.rows();
  const Eigen::Index n = cost.cols();
  if (alpha.size() != m || beta.size() != n)
    throw std::invalid_argument("marginal sizes (" + std::to_string(alpha.size()) + ", " +
                                std::to_string(beta.size()) + ") do not match cost shape " +
                                std::to_string(m) + "x" + std::to_string(n));
  if (!(params.epsilon > 0.0) || !(params.tol > 0.0) || params.max_iters < 1 ||
      params.check_every < 1)
    throw std::invalid_argument("invalid Sinkhorn parameters");
  const double mass_a = alpha.total();
  const double mass_b = beta.total();
  if (std::abs(mass_a - mass_b) > 1e-9 * std::max(mass_a, mass_b))
    throw std::invalid_argument("marginals carry unequal total mass");

  const Matrix log_kernel = -cost.values() / params.epsilon;
  const Vector log_a = log_of(alpha.weights());
  const Vector log_b = log_of(beta.weights());
  Vector log_u = Vector::Zero(m);
  Vector log_v = Vector::Zero(n);

  auto update_u = [&] {
    for (Eigen::Index i = 0; i < m; ++i) {
      if (log_a(i) == kNegInf) {
        log_u(i) = kNegInf;
        continue;
      }
      log_u(i) = log_a(i) - log_sum_exp(n, [&](Eigen::Index j) { return log_v(j) + log_kernel(i, j); });
    }
  };
  auto update_v = [&] {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (log_b(j) == kNegInf) {
        log_v(j) = kNegInf;
        continue;
      }
      log_v(j) = log_b(j) - log_sum_exp(m, [&](Eigen::Index i) { return log_u(i) + log_kernel(i, j); });
    }
  };
  auto build_plan = [&] {
    Matrix plan(m, n);
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = 0; j < n; ++j) {
        double e = log_u(i) + log_v(j) + log_kernel(i, j);
        plan(i, j) = e == kNegInf ? 0.0 : std::exp(e);
      }
    return plan;
  };
  auto violation = [&](const Matrix& plan) {
    double err = ((plan.rowwise().sum() - alpha.weights()).cwiseAbs()).maxCoeff();
    err = std::max(err, ((plan.colwise().sum().transpose() - beta.weights()).cwiseAbs()).maxCoeff());
    return err;
  };

  TransportPlan result;
  result.row_marginal = alpha.weights();
  result.col_marginal = beta.weights();
  for (int it = 1; it <= params.max_iters; ++it) {
    update_u();
    update_v();
    result.iterations = it;
    if (it % params.check_every == 0 || it == params.max_iters) {
      Matrix plan = build_plan();
      double err = violation(plan);
      if (!std::isfinite(err)) throw std::runtime_error("Sinkhorn produced a non-finite plan");
      result.values = std::move(plan);
      result.marginal_error = err;
      if (err <= params.tol) {
        result.converged = true;
        break;
      }
    }
  }
  if (params.round_to_marginals) round_plan(result.values, alpha.weights(), beta.weights());
  return result;
}

double ot_objective(const Matrix& plan, const Matrix& cost) {
  if (plan.rows() != cost.rows() || plan.cols() != cost.cols())
    throw std::invalid_argument("plan and cost shapes differ");
  double total = 0.0;
  for (Eigen::Index i = 0; i < plan.rows(); ++i)
    for (Eigen::Index j = 0; j < plan.cols(); ++j) total += plan(i, j) * cost(i, j);
  return total;
}

AssignmentSolution exact_ot_oracle(const CostMatrix& cost) {
  const Eigen::Index n = cost.rows();
  if (cost.cols() != n) throw std::invalid_argument("assignment oracle needs a square cost");
  if (n > 8) throw std::invalid_argument("assignment oracle refuses n > 8");
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  AssignmentSolution best;
  best.objective = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) total += cost(i, perm[static_cast<std::size_t>(i)]);
    total /= static_cast<double>(n);
    if (total < best.objective) {
      best.objective = total;
      best.permutation = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace otrcl
