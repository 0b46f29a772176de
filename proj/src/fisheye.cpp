#include "fisheyehdk/fisheye.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace fhdk {

namespace {

constexpr double kHalfPi = std::numbers::pi / 2.0;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double theta_distorted_slope(double theta, const std::array<double, 4>& k) {
  const double t2 = theta * theta;
  return 1.0 + t2 * (3.0 * k[0] + t2 * (5.0 * k[1] + t2 * (7.0 * k[2] + t2 * 9.0 * k[3])));
}

// Bilinear read of channel plane at (y, x) already known to be in bounds.
double bilinear(std::span<const double> plane, int w, int h, double y, double x) {
  const int y0 = std::min(static_cast<int>(std::floor(y)), h - 1);
  const int x0 = std::min(static_cast<int>(std::floor(x)), w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  const int x1 = std::min(x0 + 1, w - 1);
  const double ly = y - y0, lx = x - x0;
  return (1 - ly) * ((1 - lx) * plane[y0 * w + x0] + lx * plane[y0 * w + x1]) +
         ly * ((1 - lx) * plane[y1 * w + x0] + lx * plane[y1 * w + x1]);
}

constexpr double kEdgeTol = 1e-6;

bool support_valid(const std::vector<std::uint8_t>& mask, int w, int h, double y, double x) {
  const int y0 = std::min(static_cast<int>(std::floor(y)), h - 1);
  const int x0 = std::min(static_cast<int>(std::floor(x)), w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  const int x1 = std::min(x0 + 1, w - 1);
  const double ly = y - y0, lx = x - x0;
  auto ok = [&](int yy, int xx) { return mask[yy * w + xx] != 0; };
  if (!ok(y0, x0)) return false;
  if (lx > 0.0 && !ok(y0, x1)) return false;
  if (ly > 0.0 && !ok(y1, x0)) return false;
  if (lx > 0.0 && ly > 0.0 && !ok(y1, x1)) return false;
  return true;
}

template <typename RadiusMap>
WarpResult radial_resample(const LabeledImage& img, const FisheyeProfile& profile,
                           const std::vector<std::uint8_t>* input_valid, RadiusMap&& map_radius) {
  const int c = img.channels(), h = img.height(), w = img.width();
  if (img.labels.size() != static_cast<std::size_t>(h) * w) {
    throw std::invalid_argument("fisheye: label map size does not match image");
  }
  if (input_valid && input_valid->size() != img.labels.size()) {
    throw std::invalid_argument("fisheye: validity mask size does not match image");
  }
  profile.validate(h, w);
  WarpResult res;
  res.image.pixels = Tensor({c, h, w});
  res.image.labels.assign(static_cast<std::size_t>(h) * w, static_cast<std::uint8_t>(img.void_id));
  res.image.void_id = img.void_id;
  res.valid.assign(static_cast<std::size_t>(h) * w, 0);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double dy = y - profile.cy, dx = x - profile.cx;
      const double r_out = std::hypot(dy, dx);
      double sy = profile.cy, sx = profile.cx;
      if (r_out > 0.0) {
        const double r_src = map_radius(r_out);
        if (!std::isfinite(r_src)) continue;
        sy = profile.cy + dy * (r_src / r_out);
        sx = profile.cx + dx * (r_src / r_out);
      }
      // Round-off can push a border source a hair outside the image.
      if (!(sy >= -kEdgeTol && sy <= h - 1 + kEdgeTol && sx >= -kEdgeTol && sx <= w - 1 + kEdgeTol)) continue;
      sy = std::clamp(sy, 0.0, h - 1.0);
      sx = std::clamp(sx, 0.0, w - 1.0);
      if (input_valid && !support_valid(*input_valid, w, h, sy, sx)) continue;
      const std::size_t idx = static_cast<std::size_t>(y) * w + x;
      for (int ch = 0; ch < c; ++ch) {
        res.image.pixels[(static_cast<std::size_t>(ch) * h + y) * w + x] =
            bilinear(img.pixels.values().subspan(static_cast<std::size_t>(ch) * h * w, static_cast<std::size_t>(h) * w), w, h, sy, sx);
      }
      const int ny = std::clamp(static_cast<int>(std::lround(sy)), 0, h - 1);
      const int nx = std::clamp(static_cast<int>(std::lround(sx)), 0, w - 1);
      res.image.labels[idx] = img.labels[static_cast<std::size_t>(ny) * w + nx];
      res.valid[idx] = 1;
    }
  }
  return res;
}

}  // namespace

FisheyeProfile FisheyeProfile::centered(double f, int height, int width) {
  FisheyeProfile p;
  p.f = f;
  p.f_u = f;
  p.cy = (height - 1) / 2.0;
  p.cx = (width - 1) / 2.0;
  return p;
}

void FisheyeProfile::validate(int height, int width) const {
  if (!(f > 0.0) || !std::isfinite(f)) throw std::invalid_argument("fisheye profile: f must be positive");
  if (!(f_u > 0.0) || !std::isfinite(f_u)) throw std::invalid_argument("fisheye profile: f_u must be positive");
  if (!(cy >= 0.0 && cy <= height - 1 && cx >= 0.0 && cx <= width - 1)) {
    throw std::invalid_argument("fisheye profile: distortion centre lies outside the image");
  }
  if (equidistant()) return;
  constexpr int kSamples = 2048;
  for (int i = 0; i <= kSamples; ++i) {
    const double theta = kHalfPi * i / kSamples;
    if (!(theta_distorted_slope(theta, coeffs) > 0.0)) {
      throw std::invalid_argument("fisheye profile: distortion polynomial is not monotone on [0, pi/2]");
    }
  }
}

double theta_distorted(double theta, const std::array<double, 4>& k) {
  const double t2 = theta * theta;
  return theta * (1.0 + t2 * (k[0] + t2 * (k[1] + t2 * (k[2] + t2 * k[3]))));
}

double invert_theta_distorted(double theta_d, const std::array<double, 4>& coeffs) {
  if (theta_d < 0.0 || !std::isfinite(theta_d)) return kNaN;
  if (coeffs == std::array<double, 4>{0.0, 0.0, 0.0, 0.0}) return theta_d < kHalfPi ? theta_d : kNaN;
  if (theta_d >= theta_distorted(kHalfPi, coeffs)) return kNaN;
  double lo = 0.0, hi = kHalfPi;
  while (hi - lo > 1e-10) {
    const double mid = 0.5 * (lo + hi);
    if (theta_distorted(mid, coeffs) < theta_d) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

double fisheye_to_perspective_radius(double r_d, const FisheyeProfile& p) {
  const double theta = invert_theta_distorted(r_d / p.f, p.coeffs);
  if (!std::isfinite(theta) || theta >= kHalfPi) return kNaN;
  return p.f_u * std::tan(theta);
}

double perspective_to_fisheye_radius(double r_u, const FisheyeProfile& p) {
  return p.f * theta_distorted(std::atan(r_u / p.f_u), p.coeffs);
}

std::size_t WarpResult::valid_count() const {
  return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
}

WarpResult warp_to_fisheye(const LabeledImage& img, const FisheyeProfile& profile) {
  return radial_resample(img, profile, nullptr,
                         [&profile](double r_d) { return fisheye_to_perspective_radius(r_d, profile); });
}

WarpResult rectify(const LabeledImage& img, const FisheyeProfile& profile,
                   const std::vector<std::uint8_t>* input_valid) {
  return radial_resample(img, profile, input_valid,
                         [&profile](double r_u) { return perspective_to_fisheye_radius(r_u, profile); });
}

}  // namespace fhdk
