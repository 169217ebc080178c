#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "otrcl/data.hpp"
#include "otrcl/model.hpp"
#include "otrcl/partial_ot.hpp"

namespace otrcl {

enum class TrainMode {
  kFull,        // corrected-label loss + lambda * alignment loss
  kBaselineCE,  // cross-entropy on the observed labels only, no transport
  kAblatePLC,   // observed-label cross-entropy + lambda * alignment loss
  kAblateBHG,   // corrected-label loss only
};

const char* to_string(TrainMode mode);
TrainMode train_mode_from_string(const std::string& name);

struct TrainConfig {
  int epochs = 30;
  int warmup_epochs = 2;
  int batch_size = 200;
  double lambda = 0.4;
  double gamma = 0.99;
  double s_start = 0.2;
  double s_end = 0.8;
  double epsilon_ot = 0.03;    // label correction
  double epsilon_match = 0.1;  // cross-modal matching
  int sinkhorn_max_iters = 5000;
  double sinkhorn_tol = 1e-6;
  double lr = 3e-3;
  int hidden = 64;
  int embed = 16;
  double tau1 = 1.0;
  double tau2 = 0.1;
  double tau3 = 1.0;
  int confident_per_class = 5;
  int neighbors = 0;  // 0 selects max(2, round(0.005 N))
  bool estimate_prior = false;
  TrainMode mode = TrainMode::kFull;
  std::uint64_t seed = 7;

  void validate() const;
  bool uses_plc() const { return mode == TrainMode::kFull || mode == TrainMode::kAblateBHG; }
  bool uses_bhg() const { return mode == TrainMode::kFull || mode == TrainMode::kAblatePLC; }
  double effective_lambda() const { return uses_bhg() ? lambda : 0.0; }
  MassSchedule schedule() const;
};

struct EpochMetrics {
  int epoch = 0;
  bool warmup = false;
  double mass = 0.0;  // transported mass s; 0 when no correction ran
  double loss = 0.0;
  double label_loss = 0.0;
  double align_loss = 0.0;
  std::optional<double> correction_assigned;
  std::optional<double> correction_overall;
  double val_map_i2t = 0.0;
  double val_map_t2i = 0.0;
  bool partial_converged = true;
  int matching_unconverged = 0;
};

/// Instrumentation for which solver paths ran.
struct TrainCounters {
  long partial_solves = 0;
  long matching_solves = 0;
  long confident_selections = 0;
  long partial_fallbacks = 0;
};

struct TrainResult {
  ModelState model{ModelDims{}};
  AdamState adam;
  Matrix targets;           // momentum targets, N x K
  Matrix training_targets;  // what the label loss used in the last epoch
  Matrix soft_labels;       // last corrected N * Y_hat (zeros if none)
  std::vector<EpochMetrics> log;
  TrainCounters counters;
  int epochs_completed = 0;
  std::string rng_state;
};

/// Runs the whole schedule on the training split; validation retrieval is
/// logged every epoch when the dataset has a validation split. Deterministic
/// for a fixed config.
TrainResult train(const Dataset& data, const TrainConfig& config);

/// Embeds a split with both heads.
std::pair<Matrix, Matrix> embed_split(const ModelState& model, const Dataset& data, Split split);

}  // namespace otrcl
