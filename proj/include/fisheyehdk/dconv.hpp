#pragma once

// Standard and deformable 2D convolution (cross-correlation, zero padding).
//
// The kernels in this header are OpenMP-parallel and column-based: each
// layer first materialises a [C_in * taps, H_out * W_out] sample matrix and
// then contracts it with the weights. Plain convolution and deformable
// convolution share the contraction, so a zero KernelField reproduces
// conv2d bit-for-bit in both the forward and the backward pass.
//
// Serial direct-loop counterparts live in fhdk::reference (dconv_reference.hpp).

#include "fisheyehdk/graph.hpp"
#include "fisheyehdk/hdk.hpp"
#include "fisheyehdk/tensor.hpp"

namespace fhdk {

struct ConvParams {
  Tensor weight;  // [C_out, C_in, h_k, w_k]
  Tensor bias;    // [C_out]
  int stride = 1;
  int padding = 0;
  int dilation = 1;

  int out_channels() const { return weight.dim(0); }
  int in_channels() const { return weight.dim(1); }
  int kernel_h() const { return weight.dim(2); }
  int kernel_w() const { return weight.dim(3); }
  int out_size(int in, int k) const { return (in + 2 * padding - dilation * (k - 1) - 1) / stride + 1; }
};

/// "Same" padding for odd kernels at stride 1: (k - 1) / 2 * dilation.
ConvParams make_conv_params(int c_out, int c_in, int k, int dilation = 1);

/// Bilinear interpolation at fractional (y, x); pixels outside the image
/// contribute zero.
double bilinear_sample(const FeatureMap& f, int b, int c, double y, double x);

/// d sample / dy and d sample / dx (one-sided at integer coordinates).
struct SampleGrad {
  double dy = 0.0;
  double dx = 0.0;
};
SampleGrad bilinear_sample_grad(const FeatureMap& f, int b, int c, double y, double x);

FeatureMap conv2d(const FeatureMap& f, const ConvParams& p);
FeatureMap deform_conv2d(const FeatureMap& f, const KernelField& field, const ConvParams& p);
/// deform_conv2d with the centre tap pinned at offset (0, 0).
FeatureMap rdc_conv2d(const FeatureMap& f, const KernelField& field, const ConvParams& p);

struct ConvGrads {
  FeatureMap input;
  Tensor weight;
  Tensor bias;
  Tensor field;  // empty for conv2d
};

ConvGrads conv2d_backward(const FeatureMap& f, const ConvParams& p, const FeatureMap& grad_out);
ConvGrads deform_conv2d_backward(const FeatureMap& f, const KernelField& field,
                                 const ConvParams& p, const FeatureMap& grad_out,
                                 bool restrict_center = false);

/// Index of the centre tap of an h_k x w_k kernel.
inline int center_tap(int kernel_h, int kernel_w) { return (kernel_h / 2) * kernel_w + kernel_w / 2; }

}  // namespace fhdk
