#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "otrcl/data.hpp"
#include "otrcl/eval.hpp"
#include "otrcl/train.hpp"

namespace otrcl {

/// A fully resolved run: training settings, one data source and an output
/// directory. `seed` drives both data generation and training.
struct ExperimentConfig {
  TrainConfig train;
  std::optional<SynthConfig> synth;
  std::optional<std::filesystem::path> dataset;  // dataset manifest
  std::filesystem::path out_dir = "otrcl_run";
  std::uint64_t seed = 7;

  /// Throws std::invalid_argument unless exactly one data source is set.
  void validate() const;
  /// Copies `seed` into the synthetic and training configs.
  void apply_seed();
};

nlohmann::ordered_json to_json(const ExperimentConfig& config);

/// Reads explicit keys; missing keys keep their defaults and unknown keys are
/// rejected. A "run" block (written by run_experiment) is ignored.
ExperimentConfig experiment_from_json(const nlohmann::json& j, ExperimentConfig base = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path, ExperimentConfig base = {});

nlohmann::ordered_json to_json(const TrainConfig& config);
nlohmann::ordered_json to_json(const SynthConfig& config);

struct ExperimentOutputs {
  TrainResult train;
  RetrievalResult test;
  RetrievalResult val;
  std::optional<CorrectionAccuracy> correction;
  std::filesystem::path dataset_manifest;
};

/// Loads or generates data, trains, evaluates the test split and writes
/// run_manifest.json, metrics.json, metrics.csv and checkpoint.otrcl into
/// out_dir (plus data/ for synthetic runs). Metric files depend only on the
/// resolved config.
ExperimentOutputs run_experiment(const ExperimentConfig& config);

/// Structured metrics report of a finished run.
nlohmann::ordered_json metrics_report(const ExperimentOutputs& out);
/// One line per epoch, comma separated, with a header row.
std::string metrics_table(const std::vector<EpochMetrics>& log);

struct CheckpointEvaluation {
  RetrievalResult test;
  RetrievalResult val;
  std::optional<CorrectionAccuracy> correction;
};

/// Embeds the test and validation splits of `manifest` with the stored model.
/// Throws LoadError when the checkpoint does not fit the dataset.
CheckpointEvaluation evaluate_checkpoint(const std::filesystem::path& checkpoint,
                                         const std::filesystem::path& manifest);

nlohmann::ordered_json to_json(const CheckpointEvaluation& eval);

struct CorrectionRun {
  Matrix scaled_labels;  // N * Y_hat
  double assigned_mass = 0.0;
  bool converged = false;
  std::optional<CorrectionAccuracy> accuracy;
};

/// One label-correction solve on the training split of `manifest`, using the
/// stored model and momentum targets. `mass` defaults to the run's s_end.
CorrectionRun correct_from_checkpoint(const std::filesystem::path& checkpoint,
                                      const std::filesystem::path& manifest,
                                      std::optional<double> mass = std::nullopt);

/// Renders a double with enough digits to round-trip.
std::string format_double(double v);

}  // namespace otrcl
