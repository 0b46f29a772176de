#include "fisheyehdk/optim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace fhdk {

double poly_lr(double lr0, int iter, int max_iter, double power) {
  if (max_iter <= 0 || iter < 0 || iter > max_iter) {
    throw std::invalid_argument("poly_lr: need 0 <= iter <= max_iter, got iter=" +
                                std::to_string(iter) + " max_iter=" + std::to_string(max_iter));
  }
  return lr0 * std::pow(1.0 - static_cast<double>(iter) / max_iter, power);
}

void SgdState::validate() const {
  if (!(lr0 > 0.0)) throw std::invalid_argument("SGD learning rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("SGD momentum must be in [0, 1)");
  if (weight_decay < 0.0) throw std::invalid_argument("SGD weight decay must be >= 0");
}

void sgd_step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads,
              SgdState& state, double lr) {
  if (params.size() != grads.size()) throw std::invalid_argument("sgd_step: parameter/gradient count mismatch");
  if (state.velocity.size() < params.size()) state.velocity.resize(params.size());
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    const Tensor& g = *grads[k];
    if (!p.same_shape(g)) {
      throw std::invalid_argument("sgd_step: parameter " + std::to_string(k) + " has shape " +
                                  shape_string(p.shape()) + " but gradient " + shape_string(g.shape()));
    }
    auto& v = state.velocity[k];
    if (v.size() != p.size()) v.assign(p.size(), 0.0);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i] + state.weight_decay * p[i];
      v[i] = state.momentum * v[i] + gi;
      p[i] -= lr * v[i];
    }
  }
}

double rsgd_scale(std::span<const double> theta, double c) {
  const double s = 1.0 - c * gyro::raw::sq_norm(theta);
  return s * s / 4.0;
}

void rsgd_update(std::span<double> theta, std::span<const double> euclid_grad,
                 const RsgdState& state, double lr) {
  if (theta.size() != euclid_grad.size()) throw std::invalid_argument("rsgd_update: size mismatch");
  const double c = state.curvature.value();
  const double scale = rsgd_scale(theta, c);
  std::vector<double> moved(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) moved[i] = theta[i] - lr * scale * euclid_grad[i];
  gyro::raw::project(moved, c, state.eps, theta);
}

gyro::BallPoint rsgd_step(const gyro::BallPoint& theta, std::span<const double> euclid_grad,
                          const RsgdState& state) {
  if (!(theta.curvature() == state.curvature)) throw std::invalid_argument("rsgd_step: curvature mismatch");
  std::vector<double> coords = theta.vec();
  rsgd_update(coords, euclid_grad, state, state.lr);
  return gyro::BallPoint::from(std::move(coords), state.curvature);
}

std::vector<double> finite_diff_grad(const ScalarFn& loss, std::vector<double> params, double h,
                                     DiffScheme scheme) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_grad: step must be positive");
  auto eval = [&loss](std::span<const double> p) {
    const double v = loss(p);
    if (!std::isfinite(v)) throw std::runtime_error("finite_diff_grad: loss is not finite at a probe point");
    return v;
  };
  std::vector<double> grad(params.size());
  const double base = scheme == DiffScheme::Forward ? eval(params) : 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + h;
    const double plus = eval(params);
    if (scheme == DiffScheme::Central) {
      params[i] = saved - h;
      const double minus = eval(params);
      grad[i] = (plus - minus) / (2.0 * h);
    } else {
      grad[i] = (plus - base) / h;
    }
    params[i] = saved;
  }
  return grad;
}

GradCheckResult compare_gradients(std::span<const double> analytic,
                                  std::span<const double> numeric, double floor) {
  if (analytic.size() != numeric.size()) throw std::invalid_argument("compare_gradients: size mismatch");
  GradCheckResult r;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double abs_err = std::abs(analytic[i] - numeric[i]);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
    const double rel = abs_err / denom;
    r.max_abs_error = std::max(r.max_abs_error, abs_err);
    if (rel > r.max_rel_error) {
      r.max_rel_error = rel;
      r.worst_index = i;
    }
  }
  return r;
}

}  // namespace fhdk
