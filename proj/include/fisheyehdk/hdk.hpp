#pragma once

// Hyperbolic deformable kernel (HDK) offset predictor.
//
// Pipeline per image: average-pool by 2^m, treat every pooled pixel as a
// graph node, lift its feature vector onto the Poincare ball with exp_0,
// apply the Mobius linear layer (W (x) H) (+) b, map back with log_0,
// average over grid neighbours and bilinearly upsample to full resolution.
// The result is a KernelField of per-tap (dy, dx) offsets in pixels.

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "fisheyehdk/graph.hpp"
#include "fisheyehdk/gyro.hpp"
#include "fisheyehdk/tensor.hpp"

namespace fhdk {

struct HdkConfig {
  int kernel_h = 3;
  int kernel_w = 3;
  int downsample = 2;  // m
  gyro::Curvature curvature{gyro::kDefaultCurvature};
  double eps = gyro::kDefaultEps;
  int connectivity = 4;
  bool normalize = true;

  int taps() const { return kernel_h * kernel_w; }
  int out_channels() const { return 2 * taps(); }
  void validate() const;
};

struct HdkParams {
  HdkConfig config;
  Tensor weight;  // [2*h_k*w_k, d], tangent-space linear map
  Tensor bias;    // [2*h_k*w_k], point of the ball

  int in_channels() const { return weight.dim(1); }
  /// Throws when shapes disagree with the config or the bias left the ball.
  void validate() const;
};

/// Xavier-uniform weight (fan_in = d, fan_out = 2*h_k*w_k), zero bias.
HdkParams init_hdk_params(int d, const HdkConfig& config, std::uint64_t seed);

struct KernelField {
  Tensor data;  // [B, 2*h_k*w_k, H, W]; channel 2t is dy, 2t+1 is dx of tap t
  int kernel_h = 3;
  int kernel_w = 3;

  int taps() const { return kernel_h * kernel_w; }
  double& dy(int n, int tap, int y, int x) { return data.at(n, 2 * tap, y, x); }
  double& dx(int n, int tap, int y, int x) { return data.at(n, 2 * tap + 1, y, x); }
  double dy(int n, int tap, int y, int x) const { return data.at(n, 2 * tap, y, x); }
  double dx(int n, int tap, int y, int x) const { return data.at(n, 2 * tap + 1, y, x); }
};

KernelField zero_kernel_field(int batch, int height, int width, int kernel_h, int kernel_w);

/// Intermediate state needed by hdk_backward.
struct HdkTrace {
  int in_h = 0;
  int in_w = 0;
  int pooled_h = 0;
  int pooled_w = 0;
  Tensor pooled_nodes;  // [B, N, d]
  GridGraph graph;
};

KernelField hdk_forward(const FeatureMap& f, const HdkParams& params, HdkTrace* trace = nullptr);

struct HdkGrads {
  FeatureMap input;
  Tensor weight;
  Tensor bias;
};

/// Reverse pass of hdk_forward given d(loss)/d(field).
HdkGrads hdk_backward(const HdkTrace& trace, const HdkParams& params, const Tensor& grad_field);

struct TapPosition {
  int tap = 0;
  double y = 0.0;
  double x = 0.0;
};

/// Absolute sampling coordinates of every tap of the kernel centred at
/// (y, x): base grid position (y + r*dilation, x + s*dilation) plus offset.
std::vector<TapPosition> kernel_positions(const KernelField& field, int batch, int y, int x,
                                          int dilation = 1);

/// Binary layout: four little-endian int64 dims [B, C, H, W] followed by
/// B*C*H*W little-endian float64 values.
void write_kernel_field(std::ostream& os, const KernelField& field);
KernelField read_kernel_field(std::istream& is);

}  // namespace fhdk
