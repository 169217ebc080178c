#pragma once

#include <optional>
#include <vector>

#include "otrcl/types.hpp"

namespace otrcl {

class EvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Average precision per query, ranking the gallery by descending cosine
/// (ties by ascending gallery index). Queries with no relevant gallery item
/// get std::nullopt.
std::vector<std::optional<double>> average_precisions(const Matrix& queries, const Matrix& gallery,
                                                      const Labels& query_labels,
                                                      const Labels& gallery_labels);

/// Mean AP over queries that have at least one relevant item. Throws
/// EvaluationError when none do.
double map_score(const Matrix& queries, const Matrix& gallery, const Labels& query_labels,
                 const Labels& gallery_labels);

struct RetrievalResult {
  double map_i2t = 0.0;
  double map_t2i = 0.0;
  std::vector<std::optional<double>> ap_i2t;
  std::vector<std::optional<double>> ap_t2i;

  double mean() const { return 0.5 * (map_i2t + map_t2i); }
};

/// Image queries against the text gallery and the reverse, same split.
RetrievalResult evaluate_retrieval(const Matrix& z_v, const Matrix& z_t, const Labels& labels);

/// Per-class precision diagnostic: each query retrieves as many items as its
/// class has in the gallery; TP and FP are pooled per query class and the
/// class precisions TP / (TP + FP) are averaged over classes that occur
/// among the queries.
double class_precision(const Matrix& queries, const Matrix& gallery, const Labels& query_labels,
                       const Labels& gallery_labels);

struct CorrectionAccuracy {
  std::optional<double> assigned;  // absent when no row carries mass
  double overall = 0.0;            // argmax of the effective training targets
  Eigen::Index assigned_count = 0;
};

/// Agreement of corrected labels with the truth. Rows of `scaled_labels`
/// (N * Y_hat) with mass >= 1e-6 count as assigned; `effective_targets` are
/// what training actually used for every row.
CorrectionAccuracy correction_accuracy(const Matrix& scaled_labels, const Labels& truth,
                                       const Matrix& effective_targets);

}  // namespace otrcl
