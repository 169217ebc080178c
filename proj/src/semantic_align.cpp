#include "otrcl/semantic_align.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "otrcl/parallel.hpp"

namespace otrcl {
namespace {

constexpr double kConsistencyFloor = 1e-3;
constexpr double kScoreFloor = 1e-8;
constexpr double kLogFloor = 1e-12;

void check_distribution(std::span<const double> p) {
  double total = 0.0;
  for (double x : p) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw std::invalid_argument("distribution has an invalid entry");
    total += x;
  }
  if (std::abs(total - 1.0) > 1e-6) throw std::invalid_argument("distribution does not sum to 1");
}

Matrix row_normalized(const Matrix& z) {
  Matrix out = z;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    double norm = z.row(i).norm();
    if (!(norm > 0.0) || !std::isfinite(norm))
      throw std::invalid_argument("embedding row " + std::to_string(i) + " has zero or non-finite norm");
    out.row(i) /= norm;
  }
  return out;
}

// Confident member with the highest cosine to `query` among rows of `z`.
int closest_member(const Eigen::Ref<const Vector>& query, const std::vector<int>& members,
                   const Matrix& z) {
  int best = members.front();
  double best_sim = -2.0;
  for (int j : members) {
    double sim = cosine(query, z.row(j).transpose());
    if (sim > best_sim) {
      best_sim = sim;
      best = j;
    }
  }
  return best;
}

}  // namespace

double jsd(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size())
    throw std::invalid_argument("jsd length mismatch: " + std::to_string(p.size()) + " vs " +
                                std::to_string(q.size()));
  check_distribution(p);
  check_distribution(q);
  double total = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    double m = 0.5 * (p[k] + q[k]);
    double a = p[k] > 0.0 ? 0.5 * p[k] * std::log(p[k] / m) : 0.0;
    double b = q[k] > 0.0 ? 0.5 * q[k] * std::log(q[k] / m) : 0.0;
    total += a + b;
  }
  return std::max(0.0, total);
}

double jsd(const Vector& p, const Vector& q) {
  return jsd(std::span<const double>(p.data(), static_cast<std::size_t>(p.size())),
             std::span<const double>(q.data(), static_cast<std::size_t>(q.size())));
}

double cosine(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b) {
  double na = a.norm();
  double nb = b.norm();
  if (!(na > 0.0) || !(nb > 0.0)) throw std::invalid_argument("cosine of a zero vector");
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

std::vector<int> ConfidentSet::members() const {
  std::vector<int> out;
  for (const auto& cls : per_class) out.insert(out.end(), cls.begin(), cls.end());
  return out;
}

std::size_t ConfidentSet::size() const {
  std::size_t n = 0;
  for (const auto& cls : per_class) n += cls.size();
  return n;
}

ConfidentSet select_confident(const Matrix& pred_v, const Matrix& pred_t, int size_per_class) {
  const Eigen::Index n = pred_v.rows();
  const Eigen::Index k = pred_v.cols();
  if (pred_t.rows() != n || pred_t.cols() != k) throw std::invalid_argument("prediction shapes differ");
  if (size_per_class < 1) throw std::invalid_argument("confident set needs at least one sample per class");
  if (static_cast<Eigen::Index>(size_per_class) * k > n)
    throw std::invalid_argument("confident set of " + std::to_string(size_per_class) + " x " +
                                std::to_string(k) + " exceeds " + std::to_string(n) + " samples");

  std::vector<double> divergence(static_cast<std::size_t>(n));
  std::vector<std::vector<int>> by_class(static_cast<std::size_t>(k));
  const Labels tentative = row_argmax((pred_v + pred_t) * 0.5);
  for (Eigen::Index i = 0; i < n; ++i) {
    Vector pv = pred_v.row(i).transpose();
    Vector pt = pred_t.row(i).transpose();
    divergence[static_cast<std::size_t>(i)] = jsd(pv, pt);
    by_class[static_cast<std::size_t>(tentative[static_cast<std::size_t>(i)])].push_back(static_cast<int>(i));
  }
  auto by_divergence = [&](int a, int b) {
    double da = divergence[static_cast<std::size_t>(a)];
    double db = divergence[static_cast<std::size_t>(b)];
    return da < db || (da == db && a < b);
  };

  ConfidentSet conf;
  conf.size_per_class = size_per_class;
  conf.per_class.resize(static_cast<std::size_t>(k));
  std::vector<char> taken(static_cast<std::size_t>(n), 0);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& pool = by_class[c];
    std::sort(pool.begin(), pool.end(), by_divergence);
    std::size_t keep = std::min(pool.size(), static_cast<std::size_t>(size_per_class));
    conf.per_class[c].assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(keep));
    for (int i : conf.per_class[c]) taken[static_cast<std::size_t>(i)] = 1;
  }

  std::vector<int> leftovers;
  for (Eigen::Index i = 0; i < n; ++i)
    if (!taken[static_cast<std::size_t>(i)]) leftovers.push_back(static_cast<int>(i));
  std::sort(leftovers.begin(), leftovers.end(), by_divergence);
  std::size_t next = 0;
  for (auto& cls : conf.per_class)
    while (cls.size() < static_cast<std::size_t>(size_per_class)) cls.push_back(leftovers[next++]);
  return conf;
}

NeighborIndex knn(const Matrix& embeddings, int k) {
  const Eigen::Index n = embeddings.rows();
  if (k < 1 || k >= n)
    throw std::invalid_argument("knn needs 1 <= k < N (k=" + std::to_string(k) + ", N=" +
                                std::to_string(n) + ")");
  const Matrix unit = row_normalized(embeddings);
  NeighborIndex out{IndexMatrix(n, k), Matrix(n, k)};
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t row) {
    const auto i = static_cast<Eigen::Index>(row);
    Vector sims = unit * unit.row(i).transpose();
    std::vector<int> order;
    order.reserve(static_cast<std::size_t>(n - 1));
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) order.push_back(static_cast<int>(j));
    std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](int a, int b) {
      return sims(a) > sims(b) || (sims(a) == sims(b) && a < b);
    });
    for (int j = 0; j < k; ++j) {
      out.indices(i, j) = order[static_cast<std::size_t>(j)];
      out.similarities(i, j) = std::clamp(sims(order[static_cast<std::size_t>(j)]), -1.0, 1.0);
    }
  });
  return out;
}

int default_neighbors(Eigen::Index n) {
  auto k = static_cast<Eigen::Index>(std::llround(0.005 * static_cast<double>(n)));
  k = std::max<Eigen::Index>(2, k);
  return static_cast<int>(std::min(k, n - 1));
}

std::pair<double, double> modal_consistency(Eigen::Index i, const ConfidentSet& conf,
                                            const Matrix& z_v, const Matrix& z_t) {
  const std::vector<int> members = conf.members();
  if (members.empty()) throw std::invalid_argument("confident set is empty");
  const Vector qv = z_v.row(i).transpose();
  const Vector qt = z_t.row(i).transpose();

  const int anchor_v = closest_member(qv, members, z_v);
  double num_v = shifted_cosine(cosine(qv, z_v.row(anchor_v).transpose()));
  double den_v = shifted_cosine(cosine(qt, z_t.row(anchor_v).transpose()));

  const int anchor_t = closest_member(qt, members, z_t);
  double num_t = shifted_cosine(cosine(qt, z_t.row(anchor_t).transpose()));
  double den_t = shifted_cosine(cosine(qv, z_v.row(anchor_t).transpose()));

  return {num_v / std::max(den_v, kConsistencyFloor), num_t / std::max(den_t, kConsistencyFloor)};
}

Matrix semantic_cost(const ConfidentSet& conf, const NeighborIndex& nbrs_v,
                     const NeighborIndex& nbrs_t, const Matrix& targets, const Matrix& z_v,
                     const Matrix& z_t) {
  const Eigen::Index n = targets.rows();
  const Eigen::Index k = targets.cols();
  if (z_v.rows() != n || z_t.rows() != n || nbrs_v.indices.rows() != n || nbrs_t.indices.rows() != n)
    throw std::invalid_argument("semantic cost inputs disagree on sample count");

  auto neighbour_vote = [&](Eigen::Index i, const NeighborIndex& nbrs) {
    Vector vote = Vector::Zero(k);
    const Eigen::Index count = nbrs.indices.cols();
    for (Eigen::Index j = 0; j < count; ++j)
      vote += shifted_cosine(nbrs.similarities(i, j)) * targets.row(nbrs.indices(i, j)).transpose();
    return Vector(vote / static_cast<double>(count));
  };

  Matrix cost(n, k);
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t row) {
    const auto i = static_cast<Eigen::Index>(row);
    auto [c_v, c_t] = modal_consistency(i, conf, z_v, z_t);
    Vector score = c_v * neighbour_vote(i, nbrs_v) + c_t * neighbour_vote(i, nbrs_t);
    for (Eigen::Index j = 0; j < k; ++j) cost(i, j) = -std::log(std::max(score(j), kScoreFloor));
  });
  return cost;
}

Matrix update_targets(const Matrix& targets, const Matrix& prototypes, const Matrix& z_v,
                      const Matrix& z_t, double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must lie in [0, 1]");
  if (prototypes.rows() != targets.cols() || z_v.rows() != targets.rows() ||
      z_t.rows() != targets.rows())
    throw std::invalid_argument("target update shapes disagree");
  const Matrix scores = (z_v + z_t) * prototypes.transpose();
  const Labels nearest = row_argmax(scores);
  Matrix out = gamma * targets;
  for (Eigen::Index i = 0; i < out.rows(); ++i) out(i, nearest[static_cast<std::size_t>(i)]) += 1.0 - gamma;
  return out;
}

double soft_cross_entropy(const Matrix& targets, const Matrix& pred_v, const Matrix& pred_t) {
  if (targets.rows() != pred_v.rows() || targets.cols() != pred_v.cols() ||
      pred_t.rows() != pred_v.rows() || pred_t.cols() != pred_v.cols())
    throw std::invalid_argument("target and prediction shapes differ");
  if (targets.rows() == 0) return 0.0;
  double total = 0.0;
  for (Eigen::Index i = 0; i < targets.rows(); ++i)
    for (Eigen::Index k = 0; k < targets.cols(); ++k) {
      double t = targets(i, k);
      if (t == 0.0) continue;
      total += t * (std::log(std::max(pred_v(i, k), kLogFloor)) + std::log(std::max(pred_t(i, k), kLogFloor)));
    }
  return -total / static_cast<double>(targets.rows());
}

}  // namespace otrcl
