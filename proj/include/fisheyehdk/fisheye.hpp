#pragma once

// Synthetic fisheye distortion of perspective images and label maps.
//
// A fisheye pixel at radius r_d from the distortion centre sees the ray at
// incidence angle theta with r_d = f * theta_d(theta), where
// theta_d(theta) = theta (1 + k1 theta^2 + k2 theta^4 + k3 theta^6 + k4 theta^8).
// The same ray lands at r_u = f_u * tan(theta) in the perspective image.

#include <array>
#include <cstdint>
#include <vector>

#include "fisheyehdk/metrics.hpp"
#include "fisheyehdk/tensor.hpp"

namespace fhdk {

struct FisheyeProfile {
  double f = 200.0;
  std::array<double, 4> coeffs{0.0, 0.0, 0.0, 0.0};
  double cy = 0.0;
  double cx = 0.0;
  double f_u = 200.0;

  /// Equidistant profile centred on an h x w image, f_u = f.
  static FisheyeProfile centered(double f, int height, int width);

  /// Throws std::invalid_argument for f <= 0, f_u <= 0, a centre outside
  /// the image, or coefficients that make theta_d non-monotone on [0, pi/2].
  void validate(int height, int width) const;
  bool equidistant() const { return coeffs == std::array<double, 4>{0.0, 0.0, 0.0, 0.0}; }
};

double theta_distorted(double theta, const std::array<double, 4>& coeffs);

/// Incidence angle whose distorted angle equals `theta_d`; NaN when no
/// angle in [0, pi/2) reaches it. Closed form for the equidistant model,
/// bisection (tolerance 1e-10) otherwise.
double invert_theta_distorted(double theta_d, const std::array<double, 4>& coeffs);

/// Perspective radius sampled by a fisheye pixel at radius r_d; NaN when
/// the ray is at or beyond 90 degrees.
double fisheye_to_perspective_radius(double r_d, const FisheyeProfile& p);
double perspective_to_fisheye_radius(double r_u, const FisheyeProfile& p);

struct LabeledImage {
  Tensor pixels;                     // [C, H, W], values in [0, 1]
  std::vector<std::uint8_t> labels;  // [H, W]
  int void_id = kVoidLabel;

  int channels() const { return pixels.dim(0); }
  int height() const { return pixels.dim(1); }
  int width() const { return pixels.dim(2); }
};

struct WarpResult {
  LabeledImage image;
  std::vector<std::uint8_t> valid;  // [H, W], 1 = pixel has a source
  std::size_t valid_count() const;
};

/// Inverse-warps a perspective image into the fisheye frame. Image
/// channels are sampled bilinearly and labels by nearest neighbour; pixels
/// without a source are black and void.
WarpResult warp_to_fisheye(const LabeledImage& img, const FisheyeProfile& profile);

/// Undoes warp_to_fisheye's geometry. When `input_valid` is given, an
/// output pixel is valid only if its whole bilinear support is valid.
WarpResult rectify(const LabeledImage& img, const FisheyeProfile& profile,
                   const std::vector<std::uint8_t>* input_valid = nullptr);

}  // namespace fhdk
