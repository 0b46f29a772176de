#include "fisheyehdk/dconv.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace fhdk {

ConvParams make_conv_params(int c_out, int c_in, int k, int dilation) {
  if (c_out < 1 || c_in < 1 || k < 1 || k % 2 == 0 || dilation < 1) {
    throw std::invalid_argument("make_conv_params: invalid layer geometry");
  }
  ConvParams p{Tensor({c_out, c_in, k, k}), Tensor({c_out}), 1, (k - 1) / 2 * dilation, dilation};
  return p;
}

namespace {

// Four-neighbour bilinear stencil with zero padding.
struct Stencil {
  int y0, x0;
  double ly, lx;
  bool inside;  // false when no neighbour is inside the image
};

inline Stencil make_stencil(double y, double x, int h, int w) {
  if (!(y > -1.0 && y < h && x > -1.0 && x < w)) return {0, 0, 0.0, 0.0, false};
  const double fy = std::floor(y);
  const double fx = std::floor(x);
  return {static_cast<int>(fy), static_cast<int>(fx), y - fy, x - fx, true};
}

inline double stencil_value(const double* plane, int h, int w, const Stencil& s) {
  if (!s.inside) return 0.0;
  const int y1 = s.y0 + 1, x1 = s.x0 + 1;
  const bool y0_ok = s.y0 >= 0, y1_ok = y1 <= h - 1;
  const bool x0_ok = s.x0 >= 0, x1_ok = x1 <= w - 1;
  const double v00 = (y0_ok && x0_ok) ? plane[s.y0 * w + s.x0] : 0.0;
  const double v01 = (y0_ok && x1_ok) ? plane[s.y0 * w + x1] : 0.0;
  const double v10 = (y1_ok && x0_ok) ? plane[y1 * w + s.x0] : 0.0;
  const double v11 = (y1_ok && x1_ok) ? plane[y1 * w + x1] : 0.0;
  const double hy = 1.0 - s.ly, hx = 1.0 - s.lx;
  return hy * hx * v00 + hy * s.lx * v01 + s.ly * hx * v10 + s.ly * s.lx * v11;
}

inline SampleGrad stencil_grad(const double* plane, int h, int w, const Stencil& s) {
  if (!s.inside) return {};
  const int y1 = s.y0 + 1, x1 = s.x0 + 1;
  const bool y0_ok = s.y0 >= 0, y1_ok = y1 <= h - 1;
  const bool x0_ok = s.x0 >= 0, x1_ok = x1 <= w - 1;
  const double v00 = (y0_ok && x0_ok) ? plane[s.y0 * w + s.x0] : 0.0;
  const double v01 = (y0_ok && x1_ok) ? plane[s.y0 * w + x1] : 0.0;
  const double v10 = (y1_ok && x0_ok) ? plane[y1 * w + s.x0] : 0.0;
  const double v11 = (y1_ok && x1_ok) ? plane[y1 * w + x1] : 0.0;
  const double hy = 1.0 - s.ly, hx = 1.0 - s.lx;
  return {hx * (v10 - v00) + s.lx * (v11 - v01), hy * (v01 - v00) + s.ly * (v11 - v10)};
}

inline void stencil_scatter(double* plane, int h, int w, const Stencil& s, double g) {
  if (!s.inside) return;
  const int y1 = s.y0 + 1, x1 = s.x0 + 1;
  const bool y0_ok = s.y0 >= 0, y1_ok = y1 <= h - 1;
  const bool x0_ok = s.x0 >= 0, x1_ok = x1 <= w - 1;
  const double hy = 1.0 - s.ly, hx = 1.0 - s.lx;
  if (y0_ok && x0_ok) plane[s.y0 * w + s.x0] += g * (hy * hx);
  if (y0_ok && x1_ok) plane[s.y0 * w + x1] += g * (hy * s.lx);
  if (y1_ok && x0_ok) plane[y1 * w + s.x0] += g * (s.ly * hx);
  if (y1_ok && x1_ok) plane[y1 * w + x1] += g * (s.ly * s.lx);
}

struct Geometry {
  int batch, c_in, h, w, c_out, kh, kw, taps, oh, ow, pixels;
};

Geometry check_conv(const FeatureMap& f, const ConvParams& p, const char* what) {
  require_rank4(f, what);
  if (p.weight.rank() != 4 || p.bias.rank() != 1 || p.bias.dim(0) != p.weight.dim(0)) {
    throw std::invalid_argument(std::string(what) + ": malformed weight/bias shapes");
  }
  if (p.in_channels() != f.dim(1)) {
    throw std::invalid_argument(std::string(what) + ": input has " + std::to_string(f.dim(1)) +
                                " channels, weights expect " + std::to_string(p.in_channels()));
  }
  if (p.stride < 1 || p.dilation < 1 || p.padding < 0) {
    throw std::invalid_argument(std::string(what) + ": invalid stride/padding/dilation");
  }
  Geometry g{f.dim(0), f.dim(1), f.dim(2), f.dim(3), p.out_channels(), p.kernel_h(), p.kernel_w(),
             p.kernel_h() * p.kernel_w(), p.out_size(f.dim(2), p.kernel_h()),
             p.out_size(f.dim(3), p.kernel_w()), 0};
  if (g.oh < 1 || g.ow < 1) throw std::invalid_argument(std::string(what) + ": empty output");
  g.pixels = g.oh * g.ow;
  return g;
}

void check_field(const Geometry& g, const KernelField& field, const ConvParams& p, const char* what) {
  if (p.stride != 1) {
    throw std::invalid_argument(std::string(what) + ": deformable convolution requires stride 1");
  }
  const Tensor& t = field.data;
  if (t.rank() != 4 || field.kernel_h != g.kh || field.kernel_w != g.kw || t.dim(0) != g.batch ||
      t.dim(1) != 2 * g.taps || t.dim(2) != g.oh || t.dim(3) != g.ow) {
    throw std::invalid_argument(std::string(what) + ": kernel field " + shape_string(t.shape()) +
                                " does not match output [" + std::to_string(g.batch) + ", " +
                                std::to_string(2 * g.taps) + ", " + std::to_string(g.oh) + ", " +
                                std::to_string(g.ow) + "]");
  }
}

// Regular (integer) sampling columns for batch item n.
void regular_columns(const FeatureMap& f, const ConvParams& p, const Geometry& g, int n,
                     std::vector<double>& col) {
  col.assign(static_cast<std::size_t>(g.c_in) * g.taps * g.pixels, 0.0);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < g.c_in; ++i) {
    const double* plane = f.plane(n, i).data();
    for (int t = 0; t < g.taps; ++t) {
      const int ky = t / g.kw, kx = t % g.kw;
      double* row = col.data() + (static_cast<std::size_t>(i) * g.taps + t) * g.pixels;
      for (int oy = 0; oy < g.oh; ++oy) {
        const int iy = oy * p.stride - p.padding + ky * p.dilation;
        for (int ox = 0; ox < g.ow; ++ox) {
          const int ix = ox * p.stride - p.padding + kx * p.dilation;
          row[oy * g.ow + ox] = (iy >= 0 && iy < g.h && ix >= 0 && ix < g.w) ? plane[iy * g.w + ix] : 0.0;
        }
      }
    }
  }
}

inline Stencil deform_stencil(const KernelField& field, const ConvParams& p, const Geometry& g,
                              int n, int t, int oy, int ox, bool restrict_center, int center) {
  const int ky = t / g.kw, kx = t % g.kw;
  double y = oy - p.padding + ky * p.dilation;
  double x = ox - p.padding + kx * p.dilation;
  if (!(restrict_center && t == center)) {
    y += field.dy(n, t, oy, ox);
    x += field.dx(n, t, oy, ox);
  }
  return make_stencil(y, x, g.h, g.w);
}

void deform_columns(const FeatureMap& f, const KernelField& field, const ConvParams& p,
                    const Geometry& g, int n, bool restrict_center, std::vector<double>& col) {
  col.assign(static_cast<std::size_t>(g.c_in) * g.taps * g.pixels, 0.0);
  const int center = center_tap(g.kh, g.kw);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < g.c_in; ++i) {
    const double* plane = f.plane(n, i).data();
    for (int t = 0; t < g.taps; ++t) {
      double* row = col.data() + (static_cast<std::size_t>(i) * g.taps + t) * g.pixels;
      for (int oy = 0; oy < g.oh; ++oy) {
        for (int ox = 0; ox < g.ow; ++ox) {
          const Stencil s = deform_stencil(field, p, g, n, t, oy, ox, restrict_center, center);
          row[oy * g.ow + ox] = stencil_value(plane, g.h, g.w, s);
        }
      }
    }
  }
}

// out[n, o, :] = bias[o] + sum_q W[o, q] * col[q, :], q ascending.
void contract(const ConvParams& p, const Geometry& g, const std::vector<double>& col, int n,
              FeatureMap& out) {
  const int rows = g.c_in * g.taps;
  const double* w = p.weight.data();
#pragma omp parallel for schedule(static)
  for (int o = 0; o < g.c_out; ++o) {
    double* dst = out.plane(n, o).data();
    for (int px = 0; px < g.pixels; ++px) dst[px] = p.bias[o];
    for (int q = 0; q < rows; ++q) {
      const double wq = w[static_cast<std::size_t>(o) * rows + q];
      const double* src = col.data() + static_cast<std::size_t>(q) * g.pixels;
      for (int px = 0; px < g.pixels; ++px) dst[px] += wq * src[px];
    }
  }
}

// Shared part of both backward passes: weight/bias gradients and the
// column gradient grad_col[q, :] = sum_o W[o, q] * grad_out[n, o, :].
void contract_backward(const ConvParams& p, const Geometry& g, const std::vector<double>& col,
                       const FeatureMap& grad_out, int n, ConvGrads& grads,
                       std::vector<double>& grad_col) {
  const int rows = g.c_in * g.taps;
  const double* w = p.weight.data();
#pragma omp parallel for schedule(static)
  for (int o = 0; o < g.c_out; ++o) {
    const double* go = grad_out.plane(n, o).data();
    double bsum = 0.0;
    for (int px = 0; px < g.pixels; ++px) bsum += go[px];
    grads.bias[o] += bsum;
    double* gw = grads.weight.data() + static_cast<std::size_t>(o) * rows;
    for (int q = 0; q < rows; ++q) {
      const double* src = col.data() + static_cast<std::size_t>(q) * g.pixels;
      double acc = 0.0;
      for (int px = 0; px < g.pixels; ++px) acc += go[px] * src[px];
      gw[q] += acc;
    }
  }
  grad_col.assign(static_cast<std::size_t>(rows) * g.pixels, 0.0);
#pragma omp parallel for schedule(static)
  for (int q = 0; q < rows; ++q) {
    double* dst = grad_col.data() + static_cast<std::size_t>(q) * g.pixels;
    for (int o = 0; o < g.c_out; ++o) {
      const double wq = w[static_cast<std::size_t>(o) * rows + q];
      const double* go = grad_out.plane(n, o).data();
      for (int px = 0; px < g.pixels; ++px) dst[px] += wq * go[px];
    }
  }
}

void check_grad_out(const Geometry& g, const FeatureMap& grad_out, const char* what) {
  if (grad_out.rank() != 4 || grad_out.dim(0) != g.batch || grad_out.dim(1) != g.c_out ||
      grad_out.dim(2) != g.oh || grad_out.dim(3) != g.ow) {
    throw std::invalid_argument(std::string(what) + ": output gradient has shape " +
                                shape_string(grad_out.shape()));
  }
}

FeatureMap deform_impl(const FeatureMap& f, const KernelField& field, const ConvParams& p,
                       bool restrict_center, const char* what) {
  const Geometry g = check_conv(f, p, what);
  check_field(g, field, p, what);
  FeatureMap out({g.batch, g.c_out, g.oh, g.ow});
  std::vector<double> col;
  for (int n = 0; n < g.batch; ++n) {
    deform_columns(f, field, p, g, n, restrict_center, col);
    contract(p, g, col, n, out);
  }
  return out;
}

}  // namespace

double bilinear_sample(const FeatureMap& f, int b, int c, double y, double x) {
  const int h = f.dim(2), w = f.dim(3);
  return stencil_value(f.plane(b, c).data(), h, w, make_stencil(y, x, h, w));
}

SampleGrad bilinear_sample_grad(const FeatureMap& f, int b, int c, double y, double x) {
  const int h = f.dim(2), w = f.dim(3);
  return stencil_grad(f.plane(b, c).data(), h, w, make_stencil(y, x, h, w));
}

FeatureMap conv2d(const FeatureMap& f, const ConvParams& p) {
  const Geometry g = check_conv(f, p, "conv2d");
  FeatureMap out({g.batch, g.c_out, g.oh, g.ow});
  std::vector<double> col;
  for (int n = 0; n < g.batch; ++n) {
    regular_columns(f, p, g, n, col);
    contract(p, g, col, n, out);
  }
  return out;
}

FeatureMap deform_conv2d(const FeatureMap& f, const KernelField& field, const ConvParams& p) {
  return deform_impl(f, field, p, false, "deform_conv2d");
}

FeatureMap rdc_conv2d(const FeatureMap& f, const KernelField& field, const ConvParams& p) {
  return deform_impl(f, field, p, true, "rdc_conv2d");
}

ConvGrads conv2d_backward(const FeatureMap& f, const ConvParams& p, const FeatureMap& grad_out) {
  const Geometry g = check_conv(f, p, "conv2d_backward");
  check_grad_out(g, grad_out, "conv2d_backward");
  ConvGrads grads{FeatureMap(f.shape()), Tensor::zeros_like(p.weight), Tensor::zeros_like(p.bias), Tensor()};
  std::vector<double> col, grad_col;
  for (int n = 0; n < g.batch; ++n) {
    regular_columns(f, p, g, n, col);
    contract_backward(p, g, col, grad_out, n, grads, grad_col);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < g.c_in; ++i) {
      double* gin = grads.input.plane(n, i).data();
      for (int t = 0; t < g.taps; ++t) {
        const int ky = t / g.kw, kx = t % g.kw;
        const double* gc = grad_col.data() + (static_cast<std::size_t>(i) * g.taps + t) * g.pixels;
        for (int oy = 0; oy < g.oh; ++oy) {
          const int iy = oy * p.stride - p.padding + ky * p.dilation;
          if (iy < 0 || iy >= g.h) continue;
          for (int ox = 0; ox < g.ow; ++ox) {
            const int ix = ox * p.stride - p.padding + kx * p.dilation;
            if (ix < 0 || ix >= g.w) continue;
            gin[iy * g.w + ix] += gc[oy * g.ow + ox];
          }
        }
      }
    }
  }
  return grads;
}

ConvGrads deform_conv2d_backward(const FeatureMap& f, const KernelField& field,
                                 const ConvParams& p, const FeatureMap& grad_out,
                                 bool restrict_center) {
  const Geometry g = check_conv(f, p, "deform_conv2d_backward");
  check_field(g, field, p, "deform_conv2d_backward");
  check_grad_out(g, grad_out, "deform_conv2d_backward");
  ConvGrads grads{FeatureMap(f.shape()), Tensor::zeros_like(p.weight), Tensor::zeros_like(p.bias),
                  Tensor(field.data.shape())};
  const int center = center_tap(g.kh, g.kw);
  std::vector<double> col, grad_col;
  for (int n = 0; n < g.batch; ++n) {
    deform_columns(f, field, p, g, n, restrict_center, col);
    contract_backward(p, g, col, grad_out, n, grads, grad_col);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < g.c_in; ++i) {
      double* gin = grads.input.plane(n, i).data();
      for (int t = 0; t < g.taps; ++t) {
        const double* gc = grad_col.data() + (static_cast<std::size_t>(i) * g.taps + t) * g.pixels;
        for (int oy = 0; oy < g.oh; ++oy) {
          for (int ox = 0; ox < g.ow; ++ox) {
            const Stencil s = deform_stencil(field, p, g, n, t, oy, ox, restrict_center, center);
            stencil_scatter(gin, g.h, g.w, s, gc[oy * g.ow + ox]);
          }
        }
      }
    }
#pragma omp parallel for schedule(static)
    for (int t = 0; t < g.taps; ++t) {
      if (restrict_center && t == center) continue;
      for (int oy = 0; oy < g.oh; ++oy) {
        for (int ox = 0; ox < g.ow; ++ox) {
          const Stencil s = deform_stencil(field, p, g, n, t, oy, ox, false, center);
          double gy = 0.0, gx = 0.0;
          for (int i = 0; i < g.c_in; ++i) {
            const double gc =
                grad_col[(static_cast<std::size_t>(i) * g.taps + t) * g.pixels + oy * g.ow + ox];
            const SampleGrad sg = stencil_grad(f.plane(n, i).data(), g.h, g.w, s);
            gy += gc * sg.dy;
            gx += gc * sg.dx;
          }
          grads.field.at(n, 2 * t, oy, ox) = gy;
          grads.field.at(n, 2 * t + 1, oy, ox) = gx;
        }
      }
    }
  }
  return grads;
}

}  // namespace fhdk
