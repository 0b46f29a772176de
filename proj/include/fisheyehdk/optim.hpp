#pragma once

#include <functional>
#include <span>
#include <vector>

#include "fisheyehdk/gyro.hpp"
#include "fisheyehdk/tensor.hpp"

namespace fhdk {

/// lr0 * (1 - iter / max_iter)^power
double poly_lr(double lr0, int iter, int max_iter, double power = 0.9);

struct SgdState {
  double lr0 = 1e-2;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double power = 0.9;
  int max_iter = 1;
  /// One buffer per parameter, sized on first use.
  std::vector<std::vector<double>> velocity;

  double lr(int iter) const { return poly_lr(lr0, iter, max_iter, power); }
  void validate() const;
};

/// g = grad + wd * param; v = momentum * v + g; param -= lr * v.
void sgd_step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads,
              SgdState& state, double lr);

struct RsgdState {
  double lr = 1e-2;
  gyro::Curvature curvature{gyro::kDefaultCurvature};
  double eps = gyro::kDefaultEps;
};

/// theta <- proj(theta - lr * (1 - c|theta|^2)^2 / 4 * grad).
gyro::BallPoint rsgd_step(const gyro::BallPoint& theta, std::span<const double> euclid_grad,
                          const RsgdState& state);
/// In-place form of rsgd_step for parameters stored in tensors.
void rsgd_update(std::span<double> theta, std::span<const double> euclid_grad,
                 const RsgdState& state, double lr);
/// Scale factor (1 - c|theta|^2)^2 / 4 applied to the Euclidean gradient.
double rsgd_scale(std::span<const double> theta, double c);

enum class DiffScheme { Central, Forward };

using ScalarFn = std::function<double(std::span<const double>)>;

/// Per-coordinate finite differences of `loss` at `params`. Throws
/// std::runtime_error when the loss is not finite at a probe point.
std::vector<double> finite_diff_grad(const ScalarFn& loss, std::vector<double> params,
                                     double h = 1e-5, DiffScheme scheme = DiffScheme::Central);

struct GradCheckResult {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t worst_index = 0;
};

/// Relative error |a - n| / max(|a|, |n|, floor) per coordinate.
GradCheckResult compare_gradients(std::span<const double> analytic,
                                  std::span<const double> numeric, double floor = 1e-6);

}  // namespace fhdk
