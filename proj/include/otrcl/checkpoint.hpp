#pragma once

#include <filesystem>
#include <string>

#include "otrcl/model.hpp"

namespace otrcl {

/// Everything needed to resume or evaluate a run.
struct Checkpoint {
  ModelState model{ModelDims{}};
  AdamState adam;
  int epoch = 0;
  std::string rng_state;
  Matrix targets;           // momentum targets
  Matrix training_targets;  // label-loss targets of the last epoch
  Matrix soft_labels;       // last corrected N * Y_hat
  std::string config_json;  // resolved experiment config
};

// Binary container: magic "OTRCL1", u32 format version, then little-endian
// fields; float64 for reals, length-prefixed byte strings and matrices.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);

/// Throws LoadError on a bad magic, unknown version or truncated file.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace otrcl
