#pragma once

// Poincare-ball gyrovector arithmetic.
//
// Points live in the open ball of radius 1/sqrt(c). Every operation that
// returns a BallPoint pushes its result through project_to_ball so the
// output stays at least `eps` (relative) away from the boundary.

#include <cstddef>
#include <span>
#include <vector>

namespace fhdk::gyro {

inline constexpr double kDefaultEps = 1e-5;
inline constexpr double kDefaultCurvature = 1.0;

class Curvature {
 public:
  /// Throws std::invalid_argument unless c > 0 and finite.
  explicit Curvature(double c = kDefaultCurvature);

  double value() const { return c_; }
  double sqrt_c() const { return sqrt_c_; }
  /// Ball radius 1/sqrt(c).
  double radius() const { return 1.0 / sqrt_c_; }

  friend bool operator==(const Curvature&, const Curvature&) = default;

 private:
  double c_;
  double sqrt_c_;
};

/// Euclidean vector in a tangent space.
struct TangentVector {
  std::vector<double> coords;

  std::size_t dim() const { return coords.size(); }
};

class BallPoint {
 public:
  /// Wraps `coords` after checking c*|x|^2 < 1; throws std::domain_error otherwise.
  static BallPoint from(std::vector<double> coords, Curvature c);
  static BallPoint origin(std::size_t dim, Curvature c);

  std::span<const double> coords() const { return coords_; }
  const std::vector<double>& vec() const { return coords_; }
  Curvature curvature() const { return c_; }
  std::size_t dim() const { return coords_.size(); }
  double sq_norm() const;

  BallPoint negated() const;

 private:
  BallPoint(std::vector<double> coords, Curvature c) : coords_(std::move(coords)), c_(c) {}
  friend BallPoint project_to_ball(std::span<const double>, Curvature, double);

  std::vector<double> coords_;
  Curvature c_;
};

/// Read-only row-major matrix view.
struct MatrixView {
  std::span<const double> data;
  std::size_t rows = 0;
  std::size_t cols = 0;

  double operator()(std::size_t r, std::size_t col) const { return data[r * cols + col]; }
};

BallPoint project_to_ball(std::span<const double> raw, Curvature c, double eps = kDefaultEps);

/// 2 / (1 - c|x|^2). Throws std::domain_error outside the open ball.
double conformal_factor(std::span<const double> x, Curvature c);
double conformal_factor(const BallPoint& x);

BallPoint mobius_add(const BallPoint& x, const BallPoint& y);
BallPoint mobius_scalar_mul(double a, const BallPoint& x);
/// exp_0(W log_0(x)); the tangent-space linear map conjugated at the origin.
BallPoint mobius_matvec(MatrixView w, const BallPoint& x);

BallPoint exp_map(const BallPoint& x, const TangentVector& v);
TangentVector log_map(const BallPoint& x, const BallPoint& y);
BallPoint exp0(const TangentVector& v, Curvature c);
TangentVector log0(const BallPoint& y);

double distance(const BallPoint& x, const BallPoint& y);
/// Analytic gradient of distance(x, y) with respect to x.
std::vector<double> distance_grad_x(const BallPoint& x, const BallPoint& y);

// Raw kernels over spans. No projection and no validation; callers own the
// ball constraint. `out` may not alias the inputs.
namespace raw {

double dot(std::span<const double> a, std::span<const double> b);
double sq_norm(std::span<const double> a);

void mobius_add(std::span<const double> x, std::span<const double> y, double c,
                std::span<double> out);
void exp0(std::span<const double> v, double c, std::span<double> out);
void log0(std::span<const double> y, double c, std::span<double> out);
/// Returns true when `x` was rescaled onto the margin sphere.
bool project(std::span<const double> x, double c, double eps, std::span<double> out);

// Vector-Jacobian products: accumulate (+=) J^T * g into the gradient spans.
void exp0_vjp(std::span<const double> v, double c, std::span<const double> g,
              std::span<double> grad_v);
void log0_vjp(std::span<const double> y, double c, std::span<const double> g,
              std::span<double> grad_y);
void mobius_add_vjp(std::span<const double> x, std::span<const double> y, double c,
                    std::span<const double> g, std::span<double> grad_x,
                    std::span<double> grad_y);
void project_vjp(std::span<const double> x, double c, double eps, std::span<const double> g,
                 std::span<double> grad_x);

}  // namespace raw

}  // namespace fhdk::gyro
