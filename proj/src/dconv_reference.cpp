#include "fisheyehdk/dconv_reference.hpp"

#include <cmath>
#include <stdexcept>

namespace fhdk::reference {

namespace {

double pixel_or_zero(const FeatureMap& f, int n, int c, int y, int x) {
  if (y < 0 || y >= f.dim(2) || x < 0 || x >= f.dim(3)) return 0.0;
  return f.at(n, c, y, x);
}

double sample(const FeatureMap& f, int n, int c, double y, double x) {
  const double fy = std::floor(y), fx = std::floor(x);
  const int y0 = static_cast<int>(fy), x0 = static_cast<int>(fx);
  const double ly = y - fy, lx = x - fx;
  return (1 - ly) * (1 - lx) * pixel_or_zero(f, n, c, y0, x0) +
         (1 - ly) * lx * pixel_or_zero(f, n, c, y0, x0 + 1) +
         ly * (1 - lx) * pixel_or_zero(f, n, c, y0 + 1, x0) +
         ly * lx * pixel_or_zero(f, n, c, y0 + 1, x0 + 1);
}

}  // namespace

FeatureMap conv2d(const FeatureMap& f, const ConvParams& p) {
  const int b = f.dim(0), ci = f.dim(1);
  if (p.in_channels() != ci) throw std::invalid_argument("reference::conv2d: channel mismatch");
  const int co = p.out_channels(), kh = p.kernel_h(), kw = p.kernel_w();
  const int oh = p.out_size(f.dim(2), kh), ow = p.out_size(f.dim(3), kw);
  FeatureMap out({b, co, oh, ow});
  for (int n = 0; n < b; ++n)
    for (int o = 0; o < co; ++o)
      for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
          double acc = p.bias[o];
          for (int i = 0; i < ci; ++i)
            for (int ky = 0; ky < kh; ++ky)
              for (int kx = 0; kx < kw; ++kx) {
                const int iy = y * p.stride - p.padding + ky * p.dilation;
                const int ix = x * p.stride - p.padding + kx * p.dilation;
                acc += p.weight.at(o, i, ky, kx) * pixel_or_zero(f, n, i, iy, ix);
              }
          out.at(n, o, y, x) = acc;
        }
  return out;
}

FeatureMap deform_conv2d(const FeatureMap& f, const KernelField& field, const ConvParams& p,
                         bool restrict_center) {
  const int b = f.dim(0), ci = f.dim(1);
  if (p.in_channels() != ci) throw std::invalid_argument("reference::deform_conv2d: channel mismatch");
  if (p.stride != 1) throw std::invalid_argument("reference::deform_conv2d: stride must be 1");
  const int co = p.out_channels(), kh = p.kernel_h(), kw = p.kernel_w();
  const int oh = p.out_size(f.dim(2), kh), ow = p.out_size(f.dim(3), kw);
  const int center = center_tap(kh, kw);
  FeatureMap out({b, co, oh, ow});
  for (int n = 0; n < b; ++n)
    for (int o = 0; o < co; ++o)
      for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
          double acc = p.bias[o];
          for (int i = 0; i < ci; ++i)
            for (int ky = 0; ky < kh; ++ky)
              for (int kx = 0; kx < kw; ++kx) {
                const int t = ky * kw + kx;
                double sy = y - p.padding + ky * p.dilation;
                double sx = x - p.padding + kx * p.dilation;
                if (!(restrict_center && t == center)) {
                  sy += field.data.at(n, 2 * t, y, x);
                  sx += field.data.at(n, 2 * t + 1, y, x);
                }
                acc += p.weight.at(o, i, ky, kx) * sample(f, n, i, sy, sx);
              }
          out.at(n, o, y, x) = acc;
        }
  return out;
}

}  // namespace fhdk::reference
