#include "fisheyehdk/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace fhdk {

namespace {

// Offset predictors draw from their own stream so the conv weights are the
// same whichever mode is selected.
constexpr std::uint64_t kOffsetStream = 0x9e3779b97f4a7c15ULL;

Tensor he_normal(int c_out, int c_in, int k, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / (c_in * k * k)));
  Tensor w({c_out, c_in, k, k});
  for (double& v : w.values()) v = dist(rng);
  return w;
}

}  // namespace

ToyModel::ToyModel(const ModelSpec& spec, int in_channels, int num_classes, std::uint64_t seed)
    : spec_(spec), in_channels_(in_channels), num_classes_(num_classes) {
  if (in_channels < 1 || num_classes < 2) throw std::invalid_argument("ToyModel: bad channel or class count");
  if (spec.channels.empty()) throw std::invalid_argument("ToyModel: no conv blocks");
  const int k = spec.kernel;
  const auto deformable = spec.resolved_deformable_layers();
  const HdkConfig hdk = spec.hdk_config();
  std::mt19937_64 rng(seed);
  int c_in = in_channels;
  for (std::size_t i = 0; i < spec.channels.size(); ++i) {
    ConvBlock b;
    b.weight = he_normal(spec.channels[i], c_in, k, rng);
    b.bias = Tensor({spec.channels[i]});
    b.deformable = std::find(deformable.begin(), deformable.end(), static_cast<int>(i)) != deformable.end();
    if (b.deformable) {
      const int out = 2 * k * k;
      if (spec.mode == OffsetMode::Hdk) {
        if (spec.freeze_hyperbolic) {
          b.offset_weight = Tensor({out, c_in});
          b.offset_bias = Tensor({out});
        } else {
          HdkParams p = init_hdk_params(c_in, hdk, seed ^ (kOffsetStream + i));
          b.offset_weight = std::move(p.weight);
          b.offset_bias = std::move(p.bias);
        }
      } else {
        b.offset_weight = Tensor({out, c_in, 3, 3});
        b.offset_bias = Tensor({out});
      }
    }
    c_in = spec.channels[i];
    blocks_.push_back(std::move(b));
  }
  head_weight_ = Tensor({num_classes, c_in, 1, 1});
  head_bias_ = Tensor({num_classes});
}

int ToyModel::required_multiple() const {
  const bool any_hdk = spec_.mode == OffsetMode::Hdk &&
                       std::any_of(blocks_.begin(), blocks_.end(), [](const ConvBlock& b) { return b.deformable; });
  return any_hdk ? 1 << spec_.downsample : 1;
}

std::vector<NamedParam> ToyModel::parameters() {
  std::vector<NamedParam> out;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    ConvBlock& b = blocks_[i];
    const std::string pre = "block" + std::to_string(i) + ".";
    out.push_back({pre + "weight", &b.weight, ParamGroup::Encoder});
    out.push_back({pre + "bias", &b.bias, ParamGroup::Encoder});
    if (!b.deformable) continue;
    if (spec_.mode == OffsetMode::Hdk) {
      out.push_back({pre + "hdk.weight", &b.offset_weight, ParamGroup::HyperbolicWeight});
      out.push_back({pre + "hdk.bias", &b.offset_bias, ParamGroup::HyperbolicBias});
    } else {
      out.push_back({pre + "offset.weight", &b.offset_weight, ParamGroup::Offset});
      out.push_back({pre + "offset.bias", &b.offset_bias, ParamGroup::Offset});
    }
  }
  out.push_back({"head.weight", &head_weight_, ParamGroup::Decoder});
  out.push_back({"head.bias", &head_bias_, ParamGroup::Decoder});
  return out;
}

std::vector<ConstNamedParam> ToyModel::parameters() const {
  std::vector<ConstNamedParam> out;
  for (const NamedParam& p : const_cast<ToyModel*>(this)->parameters()) out.push_back({p.name, p.tensor, p.group});
  return out;
}

ToyModel::Forward ToyModel::forward(Tape& tape, const Tensor& images) const {
  require_rank4(images, "ToyModel::forward");
  if (images.dim(1) != in_channels_) {
    throw std::invalid_argument("ToyModel: expected " + std::to_string(in_channels_) + " input channels, got " +
                                std::to_string(images.dim(1)));
  }
  const int mult = required_multiple();
  if (images.dim(2) % mult != 0 || images.dim(3) % mult != 0) {
    throw std::invalid_argument("ToyModel: input " + shape_string(images.shape()) + " not padded to a multiple of " +
                                std::to_string(mult));
  }
  Forward fw;
  for (const ConstNamedParam& p : parameters()) fw.params.push_back(tape.leaf(*p.tensor, true));
  const int pad = spec_.kernel / 2;
  const HdkConfig hdk = spec_.hdk_config();
  Tape::Id x = tape.leaf(images, false);
  std::size_t pi = 0;
  for (const ConvBlock& b : blocks_) {
    const Tape::Id w = fw.params[pi++];
    const Tape::Id bias = fw.params[pi++];
    if (b.deformable) {
      const Tape::Id ow = fw.params[pi++];
      const Tape::Id ob = fw.params[pi++];
      if (spec_.mode == OffsetMode::Hdk) {
        const Tape::Id field = tape.hdk(x, ow, ob, hdk);
        fw.fields.push_back(field);
        x = tape.deform_conv2d(x, field, w, bias, pad, 1, false);
      } else {
        const Tape::Id field = tape.conv2d(x, ow, ob, 1, 1, 1);
        fw.fields.push_back(field);
        x = tape.deform_conv2d(x, field, w, bias, pad, 1, true);
      }
    } else {
      x = tape.conv2d(x, w, bias, 1, pad, 1);
    }
    x = tape.relu(x);
  }
  fw.logits = tape.conv2d(x, fw.params[pi], fw.params[pi + 1], 1, 0, 1);
  return fw;
}

Tensor ToyModel::predict(const Tensor& images) const {
  Tape tape;
  const Forward fw = forward(tape, images);
  return tape.value(fw.logits);
}

std::vector<KernelField> ToyModel::kernel_fields(const Tensor& images) const {
  Tape tape;
  const Forward fw = forward(tape, images);
  std::vector<KernelField> out;
  for (Tape::Id id : fw.fields) {
    KernelField kf{tape.value(id), spec_.kernel, spec_.kernel};
    if (spec_.mode == OffsetMode::Rdc) {
      // The centre tap never moves under RDC whatever the predictor says.
      const int c = center_tap(spec_.kernel, spec_.kernel);
      for (int n = 0; n < kf.data.dim(0); ++n) {
        for (int ch : {2 * c, 2 * c + 1}) {
          auto pl = kf.data.plane(n, ch);
          std::fill(pl.begin(), pl.end(), 0.0);
        }
      }
    }
    out.push_back(std::move(kf));
  }
  return out;
}

}  // namespace fhdk
