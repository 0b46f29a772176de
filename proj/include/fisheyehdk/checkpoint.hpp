#pragma once

// Checkpoint container:
//   "FHDKCKPT" | uint32 version | uint64 manifest length | manifest JSON |
//   arrays as little-endian float64, in manifest order.
// The manifest records the experiment config, its hash, class weights and
// the name and shape of every array.

#include <cstdint>
#include <string>
#include <vector>

#include "fisheyehdk/config.hpp"
#include "fisheyehdk/model.hpp"

namespace fhdk {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ExperimentConfig config;
  int in_channels = 3;
  int num_classes = 0;
  std::vector<double> class_weights;
  ToyModel model;
};

/// Writes to a temporary sibling and renames it into place.
void save_checkpoint(const std::string& path, const ToyModel& model, const ExperimentConfig& config,
                     const std::vector<double>& class_weights);
/// Throws std::runtime_error on a bad magic, version, hash or array layout.
Checkpoint load_checkpoint(const std::string& path);

/// Writes `contents` to `path` through a temporary file and rename.
void write_file_atomic(const std::string& path, const std::string& contents);

}  // namespace fhdk
