#pragma once

// Experiment configuration and its key/value text format.
//
// Grammar (a TOML subset):
//   file    := { line }
//   line    := ws ( section | pair | comment )? ws newline
//   section := "[" name "]"
//   pair    := key ws "=" ws value ws comment?
//   value   := number | "true" | "false" | '"' chars '"' | "[" value { "," value } "]"
//   comment := "#" anything
// Keys inside a section are addressed as "section.key".

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fisheyehdk/fisheye.hpp"
#include "fisheyehdk/hdk.hpp"

namespace fhdk {

/// Flat "section.key" -> raw value text (strings unquoted, arrays kept
/// verbatim including brackets).
using KeyValues = std::map<std::string, std::string>;

/// Throws std::invalid_argument with the offending line number.
KeyValues parse_key_values(const std::string& text);
KeyValues load_key_values(const std::string& path);

enum class OffsetMode { None, Rdc, Hdk };

OffsetMode parse_mode(const std::string& s);
std::string mode_name(OffsetMode m);

struct DatasetSpec {
  std::uint64_t seed = 7;
  int train_size = 24;
  int val_size = 8;
  int height = 64;
  int width = 64;
  int num_classes = 4;
  double f = 50.0;
  double f_u = 0.0;  // 0 -> same as f
  std::array<double, 4> coeffs{0.0, 0.0, 0.0, 0.0};

  FisheyeProfile profile() const;
};

struct ModelSpec {
  std::vector<int> channels{12, 12, 12};
  int kernel = 3;
  /// "first", "last" or explicit indices via `deformable_layers`.
  std::string placement = "first";
  int placement_count = 1;  // l
  std::vector<int> deformable_layers;  // overrides placement when non-empty
  OffsetMode mode = OffsetMode::Hdk;
  double curvature = 1.0;
  int downsample = 2;
  int connectivity = 4;
  bool normalize_aggregation = true;
  /// Retract rows of W_h onto the ball (RSGD) instead of plain SGD.
  bool rsgd_on_weight = true;
  /// Start from W_h = 0, b_h = 0 and never update them.
  bool freeze_hyperbolic = false;

  std::vector<int> resolved_deformable_layers() const;
  HdkConfig hdk_config() const;
};

struct OptimSpec {
  double encoder_lr = 1e-3;
  double decoder_lr = 1e-2;
  double hyperbolic_lr = 1e-2;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double power = 0.9;
  int epochs = 20;
  int batch_size = 4;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string out_dir = "runs/default";
  DatasetSpec dataset;
  ModelSpec model;
  OptimSpec optim;
  std::vector<OffsetMode> compare_modes{OffsetMode::None, OffsetMode::Rdc, OffsetMode::Hdk};
  std::vector<std::uint64_t> compare_seeds{1, 2, 3, 4, 5};

  /// Throws std::invalid_argument describing the first inconsistency.
  void validate() const;
  /// Applies "section.key" overrides; unknown keys are rejected.
  void apply(const KeyValues& kv);
  std::string to_json() const;
  static ExperimentConfig from_json(const std::string& text);
  /// FNV-1a over to_json().
  std::uint64_t hash() const;
};

ExperimentConfig load_config(const std::string& path);

}  // namespace fhdk
