#include "fisheyehdk/gyro.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace fhdk::gyro {

namespace {

// Below this value of sqrt(c)*|v| the closed forms cancel catastrophically
// and the Taylor series is used instead.
constexpr double kSeriesCutoff = 1e-2;

void require_same(const BallPoint& x, const BallPoint& y, const char* op) {
  if (x.dim() != y.dim()) {
    throw std::invalid_argument(std::string(op) + ": dimension mismatch (" +
                                std::to_string(x.dim()) + " vs " + std::to_string(y.dim()) + ")");
  }
  if (!(x.curvature() == y.curvature())) {
    throw std::invalid_argument(std::string(op) + ": curvature mismatch");
  }
}

// tanh(a)/a
double tanh_ratio(double a) {
  if (a < kSeriesCutoff) {
    const double a2 = a * a;
    return 1.0 - a2 / 3.0 + 2.0 * a2 * a2 / 15.0;
  }
  return std::tanh(a) / a;
}

// artanh(a)/a
double artanh_ratio(double a) {
  if (a < kSeriesCutoff) {
    const double a2 = a * a;
    return 1.0 + a2 / 3.0 + a2 * a2 / 5.0;
  }
  return std::atanh(a) / a;
}

// (sech^2(a) a - tanh(a)) / a^3
double tanh_ratio_slope(double a) {
  if (a < kSeriesCutoff) {
    const double a2 = a * a;
    return -2.0 / 3.0 + 8.0 * a2 / 15.0 - 34.0 * a2 * a2 / 105.0;
  }
  const double t = std::tanh(a);
  return ((1.0 - t * t) * a - t) / (a * a * a);
}

// (a/(1-a^2) - artanh(a)) / a^3
double artanh_ratio_slope(double a) {
  if (a < kSeriesCutoff) {
    const double a2 = a * a;
    return 2.0 / 3.0 + 4.0 * a2 / 5.0 + 6.0 * a2 * a2 / 7.0;
  }
  return (a / (1.0 - a * a) - std::atanh(a)) / (a * a * a);
}

// Largest admissible sqrt(c)*|y| inside artanh.
constexpr double kArtanhLimit = 1.0 - 1e-15;

}  // namespace

Curvature::Curvature(double c) : c_(c), sqrt_c_(std::sqrt(c)) {
  if (!(c > 0.0) || !std::isfinite(c)) {
    throw std::invalid_argument("curvature must be positive and finite, got " + std::to_string(c));
  }
}

BallPoint BallPoint::from(std::vector<double> coords, Curvature c) {
  if (c.value() * raw::sq_norm(coords) >= 1.0) {
    throw std::domain_error("point lies outside the open Poincare ball of radius " +
                            std::to_string(c.radius()));
  }
  return BallPoint(std::move(coords), c);
}

BallPoint BallPoint::origin(std::size_t dim, Curvature c) {
  return BallPoint(std::vector<double>(dim, 0.0), c);
}

double BallPoint::sq_norm() const { return raw::sq_norm(coords_); }

BallPoint BallPoint::negated() const {
  std::vector<double> v(coords_.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = -coords_[i];
  return BallPoint(std::move(v), c_);
}

BallPoint project_to_ball(std::span<const double> x, Curvature c, double eps) {
  std::vector<double> out(x.size());
  raw::project(x, c.value(), eps, out);
  return BallPoint(std::move(out), c);
}

double conformal_factor(std::span<const double> x, Curvature c) {
  const double denom = 1.0 - c.value() * raw::sq_norm(x);
  if (!(denom > 0.0)) throw std::domain_error("conformal_factor: point outside the ball");
  return 2.0 / denom;
}

double conformal_factor(const BallPoint& x) { return conformal_factor(x.coords(), x.curvature()); }

BallPoint mobius_add(const BallPoint& x, const BallPoint& y) {
  require_same(x, y, "mobius_add");
  std::vector<double> sum(x.dim());
  raw::mobius_add(x.coords(), y.coords(), x.curvature().value(), sum);
  return project_to_ball(sum, x.curvature());
}

BallPoint mobius_scalar_mul(double a, const BallPoint& x) {
  const Curvature c = x.curvature();
  const double norm = std::sqrt(x.sq_norm());
  if (a == 0.0 || norm == 0.0) return BallPoint::origin(x.dim(), c);
  const double inner = std::atanh(std::min(c.sqrt_c() * norm, kArtanhLimit));
  const double scale = std::tanh(a * inner) / (c.sqrt_c() * norm);
  std::vector<double> out(x.dim());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = scale * x.coords()[i];
  return project_to_ball(out, c);
}

BallPoint mobius_matvec(MatrixView w, const BallPoint& x) {
  if (w.cols != x.dim() || w.data.size() != w.rows * w.cols) {
    throw std::invalid_argument("mobius_matvec: matrix is " + std::to_string(w.rows) + "x" +
                                std::to_string(w.cols) + ", point has dimension " +
                                std::to_string(x.dim()));
  }
  const double c = x.curvature().value();
  std::vector<double> u(x.dim());
  raw::log0(x.coords(), c, u);
  std::vector<double> z(w.rows, 0.0);
  for (std::size_t r = 0; r < w.rows; ++r) {
    double acc = 0.0;
    for (std::size_t k = 0; k < w.cols; ++k) acc += w(r, k) * u[k];
    z[r] = acc;
  }
  std::vector<double> out(w.rows);
  raw::exp0(z, c, out);
  return project_to_ball(out, x.curvature());
}

BallPoint exp_map(const BallPoint& x, const TangentVector& v) {
  if (v.dim() != x.dim()) throw std::invalid_argument("exp_map: dimension mismatch");
  const Curvature c = x.curvature();
  const double vnorm = std::sqrt(raw::sq_norm(v.coords));
  if (vnorm == 0.0) return x;
  const double lambda = conformal_factor(x);
  const double scale = std::tanh(c.sqrt_c() * lambda * vnorm / 2.0) / (c.sqrt_c() * vnorm);
  std::vector<double> step(x.dim());
  for (std::size_t i = 0; i < step.size(); ++i) step[i] = scale * v.coords[i];
  std::vector<double> sum(x.dim());
  raw::mobius_add(x.coords(), step, c.value(), sum);
  return project_to_ball(sum, c);
}

TangentVector log_map(const BallPoint& x, const BallPoint& y) {
  require_same(x, y, "log_map");
  const Curvature c = x.curvature();
  std::vector<double> diff(x.dim());
  const BallPoint neg = x.negated();
  raw::mobius_add(neg.coords(), y.coords(), c.value(), diff);
  const double dnorm = std::sqrt(raw::sq_norm(diff));
  TangentVector out{std::vector<double>(x.dim(), 0.0)};
  if (dnorm == 0.0) return out;
  const double lambda = conformal_factor(x);
  const double a = std::min(c.sqrt_c() * dnorm, kArtanhLimit);
  const double scale = 2.0 / (c.sqrt_c() * lambda) * std::atanh(a) / dnorm;
  for (std::size_t i = 0; i < diff.size(); ++i) out.coords[i] = scale * diff[i];
  return out;
}

BallPoint exp0(const TangentVector& v, Curvature c) {
  std::vector<double> out(v.dim());
  raw::exp0(v.coords, c.value(), out);
  return project_to_ball(out, c);
}

TangentVector log0(const BallPoint& y) {
  TangentVector out{std::vector<double>(y.dim())};
  raw::log0(y.coords(), y.curvature().value(), out.coords);
  return out;
}

double distance(const BallPoint& x, const BallPoint& y) {
  require_same(x, y, "distance");
  const double c = x.curvature().value();
  double s = 0.0;
  for (std::size_t i = 0; i < x.dim(); ++i) {
    const double d = x.coords()[i] - y.coords()[i];
    s += d * d;
  }
  if (s == 0.0) return 0.0;
  const double alpha = 1.0 - c * x.sq_norm();
  const double beta = 1.0 - c * y.sq_norm();
  const double z = 1.0 + 2.0 * c * s / (alpha * beta);
  return std::acosh(z) / x.curvature().sqrt_c();
}

std::vector<double> distance_grad_x(const BallPoint& x, const BallPoint& y) {
  require_same(x, y, "distance_grad_x");
  const double c = x.curvature().value();
  std::vector<double> grad(x.dim(), 0.0);
  double s = 0.0;
  for (std::size_t i = 0; i < x.dim(); ++i) {
    const double d = x.coords()[i] - y.coords()[i];
    s += d * d;
  }
  if (s == 0.0) return grad;
  const double alpha = 1.0 - c * x.sq_norm();
  const double beta = 1.0 - c * y.sq_norm();
  const double z = 1.0 + 2.0 * c * s / (alpha * beta);
  // d acosh(z)/dz = 1/sqrt(z^2 - 1); z^2 - 1 = (z - 1)(z + 1) avoids cancellation.
  const double outer = 1.0 / (x.curvature().sqrt_c() * std::sqrt((z - 1.0) * (z + 1.0)));
  const double k = 4.0 * c / (alpha * beta);
  for (std::size_t i = 0; i < x.dim(); ++i) {
    const double xi = x.coords()[i];
    grad[i] = outer * k * ((xi - y.coords()[i]) + c * s * xi / alpha);
  }
  return grad;
}

namespace raw {

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double sq_norm(std::span<const double> a) { return dot(a, a); }

void mobius_add(std::span<const double> x, std::span<const double> y, double c,
                std::span<double> out) {
  const double xy = dot(x, y);
  const double x2 = sq_norm(x);
  const double y2 = sq_norm(y);
  const double a = 1.0 + 2.0 * c * xy + c * y2;
  const double b = 1.0 - c * x2;
  const double denom = 1.0 + 2.0 * c * xy + c * c * x2 * y2;
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (a * x[i] + b * y[i]) / denom;
}

void exp0(std::span<const double> v, double c, std::span<double> out) {
  const double sc = std::sqrt(c);
  const double s = tanh_ratio(sc * std::sqrt(sq_norm(v)));
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = s * v[i];
}

void log0(std::span<const double> y, double c, std::span<double> out) {
  const double sc = std::sqrt(c);
  const double a = std::min(sc * std::sqrt(sq_norm(y)), kArtanhLimit);
  const double t = artanh_ratio(a);
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = t * y[i];
}

bool project(std::span<const double> x, double c, double eps, std::span<double> out) {
  const double max_norm = (1.0 - eps) / std::sqrt(c);
  const double norm = std::sqrt(sq_norm(x));
  if (norm <= max_norm) {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i];
    return false;
  }
  const double scale = max_norm / norm;
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * scale;
  return true;
}

void exp0_vjp(std::span<const double> v, double c, std::span<const double> g,
              std::span<double> grad_v) {
  const double sc = std::sqrt(c);
  const double a = sc * std::sqrt(sq_norm(v));
  const double s = tanh_ratio(a);
  // d s / d|v| divided by |v|.
  const double slope = c * tanh_ratio_slope(a);
  const double vg = dot(v, g);
  for (std::size_t i = 0; i < v.size(); ++i) grad_v[i] += s * g[i] + slope * vg * v[i];
}

void log0_vjp(std::span<const double> y, double c, std::span<const double> g,
              std::span<double> grad_y) {
  const double sc = std::sqrt(c);
  const double raw_a = sc * std::sqrt(sq_norm(y));
  const double a = std::min(raw_a, kArtanhLimit);
  const double t = artanh_ratio(a);
  const double slope = raw_a < kArtanhLimit ? c * artanh_ratio_slope(a) : 0.0;
  const double yg = dot(y, g);
  for (std::size_t i = 0; i < y.size(); ++i) grad_y[i] += t * g[i] + slope * yg * y[i];
}

void mobius_add_vjp(std::span<const double> x, std::span<const double> y, double c,
                    std::span<const double> g, std::span<double> grad_x,
                    std::span<double> grad_y) {
  const double xy = dot(x, y);
  const double x2 = sq_norm(x);
  const double y2 = sq_norm(y);
  const double a = 1.0 + 2.0 * c * xy + c * y2;
  const double b = 1.0 - c * x2;
  const double denom = 1.0 + 2.0 * c * xy + c * c * x2 * y2;

  double g_out = 0.0;  // g . out
  double gx = 0.0;     // g . x
  double gy = 0.0;     // g . y
  for (std::size_t i = 0; i < x.size(); ++i) {
    g_out += g[i] * (a * x[i] + b * y[i]) / denom;
    gx += g[i] * x[i];
    gy += g[i] * y[i];
  }
  const double g_a = gx / denom;
  const double g_b = gy / denom;
  const double g_d = -g_out / denom;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double gn = g[i] / denom;
    grad_x[i] += a * gn + g_a * 2.0 * c * y[i] - g_b * 2.0 * c * x[i] +
                 g_d * (2.0 * c * y[i] + 2.0 * c * c * y2 * x[i]);
    grad_y[i] += b * gn + g_a * (2.0 * c * x[i] + 2.0 * c * y[i]) +
                 g_d * (2.0 * c * x[i] + 2.0 * c * c * x2 * y[i]);
  }
}

void project_vjp(std::span<const double> x, double c, double eps, std::span<const double> g,
                 std::span<double> grad_x) {
  const double max_norm = (1.0 - eps) / std::sqrt(c);
  const double norm = std::sqrt(sq_norm(x));
  if (norm <= max_norm) {
    for (std::size_t i = 0; i < x.size(); ++i) grad_x[i] += g[i];
    return;
  }
  const double scale = max_norm / norm;
  const double radial = dot(x, g) / (norm * norm);
  for (std::size_t i = 0; i < x.size(); ++i) grad_x[i] += scale * (g[i] - radial * x[i]);
}

}  // namespace raw

}  // namespace fhdk::gyro
