#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace otrcl {

// Sample-major storage: one row per sample, so rows are contiguous.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using IndexMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Labels = std::vector<int>;

enum class Modality { kVisual, kText };

/// One-hot rows for integer class labels.
Matrix one_hot(const Labels& labels, int num_classes);

/// Row-wise argmax, lowest index wins ties.
Labels row_argmax(const Matrix& m);

}  // namespace otrcl
