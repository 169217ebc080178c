#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

#include "otrcl/types.hpp"

namespace otrcl {

class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Split { kTrain, kVal, kTest };

struct SplitSizes {
  Eigen::Index train = 0;
  Eigen::Index val = 0;
  Eigen::Index test = 0;

  Eigen::Index total() const { return train + val + test; }
  Eigen::Index offset(Split s) const;
  Eigen::Index count(Split s) const;
  bool operator==(const SplitSizes&) const = default;
};

/// Paired bimodal features. Rows are ordered train, then val, then test.
/// `labels` are the observed (possibly noisy) classes; val and test labels
/// are always clean.
struct Dataset {
  Matrix features_v;
  Matrix features_t;
  Labels labels;
  std::optional<Labels> true_labels;
  int num_classes = 0;
  SplitSizes splits;

  Eigen::Index size() const { return features_v.rows(); }
  /// Throws std::invalid_argument when fields disagree.
  void validate() const;
  Dataset subset(Split s) const;
};

struct SynthConfig {
  Eigen::Index n_train = 2000;
  Eigen::Index n_val = 500;
  Eigen::Index n_test = 500;
  int classes = 10;
  int dim_v = 32;
  int dim_t = 32;
  int latent_dim = 16;
  double cluster_spread = 0.2;
  double modality_noise = 0.3;
  double noise_ratio = 0.0;
  std::uint64_t seed = 7;

  void validate() const;
};

/// Gaussian clusters around unit-sphere class centers in a latent space,
/// seen through one random affine map per modality plus independent noise.
/// Training labels get symmetric noise at `noise_ratio`.
Dataset generate(const SynthConfig& config);

/// Replaces the labels of exactly floor(rho * N) uniformly chosen samples
/// with a uniform draw over the other K-1 classes.
Labels inject_symmetric_noise(const Labels& labels, int num_classes, double rho, std::uint64_t seed);

// Flat matrix container: "OTRF1", u32 rows, u32 cols, row-major LE float64.
void write_matrix(const std::filesystem::path& path, const Matrix& m);
Matrix read_matrix(const std::filesystem::path& path);

// One class index per line.
void write_labels(const std::filesystem::path& path, const Labels& labels);
Labels read_labels(const std::filesystem::path& path);

struct DatasetManifest {
  std::filesystem::path features_v;
  std::filesystem::path features_t;
  std::filesystem::path labels;
  std::optional<std::filesystem::path> true_labels;
  int num_classes = 0;
  SplitSizes splits;
};

/// Writes both feature matrices, label files and manifest.json into `dir`;
/// returns the manifest path.
std::filesystem::path save_dataset(const std::filesystem::path& dir, const Dataset& data);

/// Loads the three files, checks shapes, finiteness and label range. All
/// failures are reported as LoadError.
Dataset load_features(const std::filesystem::path& path_v, const std::filesystem::path& path_t,
                      const std::filesystem::path& path_labels, int num_classes,
                      std::optional<SplitSizes> splits = std::nullopt,
                      const std::optional<std::filesystem::path>& path_true = std::nullopt);

DatasetManifest read_manifest(const std::filesystem::path& manifest);
Dataset load_dataset(const std::filesystem::path& manifest);

}  // namespace otrcl
