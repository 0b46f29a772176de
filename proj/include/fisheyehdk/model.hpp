#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fisheyehdk/autograd.hpp"
#include "fisheyehdk/config.hpp"
#include "fisheyehdk/hdk.hpp"

namespace fhdk {

enum class ParamGroup { Encoder, Decoder, Offset, HyperbolicWeight, HyperbolicBias };

struct ConvBlock {
  Tensor weight;  // [C_out, C_in, k, k]
  Tensor bias;
  bool deformable = false;
  // HDK: [2k^2, C_in] and [2k^2]. RDC: 3x3 conv [2k^2, C_in, 3, 3] and [2k^2].
  Tensor offset_weight;
  Tensor offset_bias;
};

struct NamedParam {
  std::string name;
  Tensor* tensor;
  ParamGroup group;
};

struct ConstNamedParam {
  std::string name;
  const Tensor* tensor;
  ParamGroup group;
};

/// Stack of stride-1 "same" conv + ReLU blocks and a 1x1 classifier head.
/// Deformable blocks get one offset predictor each.
class ToyModel {
 public:
  ToyModel(const ModelSpec& spec, int in_channels, int num_classes, std::uint64_t seed);

  struct Forward {
    Tape::Id logits = -1;
    std::vector<Tape::Id> fields;  // one per deformable block, in order
    std::vector<Tape::Id> params;  // parallel to parameters()
  };

  /// Records the network on `tape`; `images` is [B, C, H, W] with H and W
  /// divisible by 2^downsample when HDK blocks are present.
  Forward forward(Tape& tape, const Tensor& images) const;
  /// Logits [B, K, H, W].
  Tensor predict(const Tensor& images) const;
  /// Offset fields of every deformable block for `images`.
  std::vector<KernelField> kernel_fields(const Tensor& images) const;

  std::vector<NamedParam> parameters();
  std::vector<ConstNamedParam> parameters() const;

  const ModelSpec& spec() const { return spec_; }
  int in_channels() const { return in_channels_; }
  int num_classes() const { return num_classes_; }
  /// Spatial multiple the input must be padded to.
  int required_multiple() const;
  const std::vector<ConvBlock>& blocks() const { return blocks_; }

 private:
  ModelSpec spec_;
  int in_channels_;
  int num_classes_;
  std::vector<ConvBlock> blocks_;
  Tensor head_weight_;
  Tensor head_bias_;
};

}  // namespace fhdk
