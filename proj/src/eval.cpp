#include "otrcl/eval.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>

#include "otrcl/parallel.hpp"

namespace otrcl {
namespace {

constexpr double kAssignedFloor = 1e-6;

Matrix unit_rows(const Matrix& z) {
  Matrix out = z;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    double norm = z.row(i).norm();
    if (!(norm > 0.0)) throw std::invalid_argument("zero embedding in retrieval set (row " + std::to_string(i) + ")");
    out.row(i) /= norm;
  }
  return out;
}

void check_shapes(const Matrix& q, const Matrix& g, const Labels& ql, const Labels& gl) {
  if (q.cols() != g.cols()) throw std::invalid_argument("query and gallery widths differ");
  if (static_cast<Eigen::Index>(ql.size()) != q.rows() || static_cast<Eigen::Index>(gl.size()) != g.rows())
    throw std::invalid_argument("label counts do not match embeddings");
}

// Gallery indices ranked for each query.
std::vector<std::vector<int>> rankings(const Matrix& queries, const Matrix& gallery) {
  const Matrix sims = unit_rows(queries) * unit_rows(gallery).transpose();
  std::vector<std::vector<int>> out(static_cast<std::size_t>(queries.rows()));
  parallel_for(out.size(), [&](std::size_t q) {
    auto& order = out[q];
    order.resize(static_cast<std::size_t>(gallery.rows()));
    std::iota(order.begin(), order.end(), 0);
    const auto row = static_cast<Eigen::Index>(q);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      double sa = sims(row, a), sb = sims(row, b);
      return sa > sb || (sa == sb && a < b);
    });
  });
  return out;
}

}  // namespace

std::vector<std::optional<double>> average_precisions(const Matrix& queries, const Matrix& gallery,
                                                      const Labels& query_labels,
                                                      const Labels& gallery_labels) {
  check_shapes(queries, gallery, query_labels, gallery_labels);
  const auto ranks = rankings(queries, gallery);
  std::vector<std::optional<double>> out(ranks.size());
  for (std::size_t q = 0; q < ranks.size(); ++q) {
    double precision_sum = 0.0;
    int hits = 0;
    for (std::size_t r = 0; r < ranks[q].size(); ++r) {
      if (gallery_labels[static_cast<std::size_t>(ranks[q][r])] != query_labels[q]) continue;
      ++hits;
      precision_sum += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
    if (hits > 0) out[q] = precision_sum / static_cast<double>(hits);
  }
  return out;
}

double map_score(const Matrix& queries, const Matrix& gallery, const Labels& query_labels,
                 const Labels& gallery_labels) {
  const auto aps = average_precisions(queries, gallery, query_labels, gallery_labels);
  double total = 0.0;
  std::size_t counted = 0;
  for (const auto& ap : aps) {
    if (!ap) continue;
    total += *ap;
    ++counted;
  }
  if (counted == 0) throw EvaluationError("no query has a relevant gallery item");
  return total / static_cast<double>(counted);
}

RetrievalResult evaluate_retrieval(const Matrix& z_v, const Matrix& z_t, const Labels& labels) {
  RetrievalResult r;
  auto mean_of = [](const std::vector<std::optional<double>>& aps) {
    double total = 0.0;
    std::size_t counted = 0;
    for (const auto& ap : aps)
      if (ap) {
        total += *ap;
        ++counted;
      }
    if (counted == 0) throw EvaluationError("no query has a relevant gallery item");
    return total / static_cast<double>(counted);
  };
  r.ap_i2t = average_precisions(z_v, z_t, labels, labels);
  r.ap_t2i = average_precisions(z_t, z_v, labels, labels);
  r.map_i2t = mean_of(r.ap_i2t);
  r.map_t2i = mean_of(r.ap_t2i);
  return r;
}

double class_precision(const Matrix& queries, const Matrix& gallery, const Labels& query_labels,
                       const Labels& gallery_labels) {
  check_shapes(queries, gallery, query_labels, gallery_labels);
  std::map<int, int> gallery_count;
  for (int c : gallery_labels) ++gallery_count[c];
  const auto ranks = rankings(queries, gallery);
  std::map<int, std::pair<long, long>> tp_fp;
  for (std::size_t q = 0; q < ranks.size(); ++q) {
    const int c = query_labels[q];
    auto& [tp, fp] = tp_fp[c];
    const auto it = gallery_count.find(c);
    const int depth = it == gallery_count.end() ? 0 : it->second;
    for (int r = 0; r < depth; ++r) {
      if (gallery_labels[static_cast<std::size_t>(ranks[q][static_cast<std::size_t>(r)])] == c) ++tp;
      else ++fp;
    }
  }
  double total = 0.0;
  for (const auto& [c, counts] : tp_fp) {
    const long denom = counts.first + counts.second;
    total += denom > 0 ? static_cast<double>(counts.first) / static_cast<double>(denom) : 0.0;
  }
  if (tp_fp.empty()) throw EvaluationError("no queries");
  return total / static_cast<double>(tp_fp.size());
}

CorrectionAccuracy correction_accuracy(const Matrix& scaled_labels, const Labels& truth,
                                       const Matrix& effective_targets) {
  const auto n = static_cast<Eigen::Index>(truth.size());
  if (scaled_labels.rows() != n || effective_targets.rows() != n)
    throw std::invalid_argument("correction accuracy inputs disagree on sample count");
  CorrectionAccuracy out;
  const Labels corrected = row_argmax(scaled_labels);
  const Labels effective = row_argmax(effective_targets);
  Eigen::Index assigned_hits = 0, overall_hits = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto u = static_cast<std::size_t>(i);
    if (effective[u] == truth[u]) ++overall_hits;
    if (scaled_labels.row(i).sum() < kAssignedFloor) continue;
    ++out.assigned_count;
    if (corrected[u] == truth[u]) ++assigned_hits;
  }
  if (out.assigned_count > 0)
    out.assigned = static_cast<double>(assigned_hits) / static_cast<double>(out.assigned_count);
  out.overall = n > 0 ? static_cast<double>(overall_hits) / static_cast<double>(n) : 0.0;
  return out;
}

}  // namespace otrcl
