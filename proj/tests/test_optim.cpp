#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fisheyehdk/optim.hpp"

namespace {

using namespace fhdk;
namespace g = fhdk::gyro;

TEST(PolyLr, Examples) {
  EXPECT_EQ(poly_lr(0.01, 0, 100, 0.9), 0.01);
  EXPECT_EQ(poly_lr(0.01, 100, 100, 0.9), 0.0);
  EXPECT_NEAR(poly_lr(0.01, 50, 100, 0.9), 0.005359, 1e-6);
  EXPECT_DOUBLE_EQ(poly_lr(0.01, 50, 100, 0.9), 0.01 * std::pow(0.5, 0.9));
  EXPECT_THROW(poly_lr(0.01, 101, 100, 0.9), std::invalid_argument);
}

TEST(Sgd, PlainStepAndZeroGradient) {
  Tensor p({3}, std::vector<double>{1.0, 2.0, 3.0});
  const Tensor grad({3}, std::vector<double>{0.5, -1.0, 0.0});
  SgdState s;
  s.momentum = 0.0;
  s.weight_decay = 0.0;
  sgd_step({&p}, {&grad}, s, 0.1);
  EXPECT_DOUBLE_EQ(p[0], 0.95);
  EXPECT_DOUBLE_EQ(p[1], 2.1);
  EXPECT_EQ(p[2], 3.0);

  const Tensor zero({3});
  const std::vector<double> before = p.storage();
  SgdState fresh;
  fresh.weight_decay = 0.0;
  sgd_step({&p}, {&zero}, fresh, 0.1);
  EXPECT_EQ(p.storage(), before);
}

TEST(Sgd, MomentumTwoSteps) {
  Tensor p({1}, 0.0);
  const Tensor grad({1}, 2.0);
  SgdState s;
  s.momentum = 0.9;
  s.weight_decay = 0.0;
  sgd_step({&p}, {&grad}, s, 0.1);
  sgd_step({&p}, {&grad}, s, 0.1);
  EXPECT_NEAR(p[0], -0.1 * 2.0 * (1 + 1.9), 1e-15);
}

TEST(Sgd, WeightDecayAndShapeMismatch) {
  Tensor p({1}, 2.0);
  const Tensor zero({1});
  SgdState s;
  s.momentum = 0.0;
  s.weight_decay = 0.5;
  sgd_step({&p}, {&zero}, s, 0.1);
  EXPECT_DOUBLE_EQ(p[0], 2.0 - 0.1 * 1.0);
  const Tensor wrong({2});
  EXPECT_THROW(sgd_step({&p}, {&wrong}, s, 0.1), std::invalid_argument);
  SgdState bad;
  bad.momentum = 1.0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(Rsgd, OriginScaleIsQuarter) {
  const g::Curvature c(1.0);
  const std::vector<double> grad{0.2, -0.4, 0.1};
  RsgdState s;
  s.lr = 0.5;
  const g::BallPoint out = rsgd_step(g::BallPoint::origin(3, c), grad, s);
  for (int i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(out.coords()[i], -0.5 * grad[i] / 4.0);
  EXPECT_EQ(rsgd_scale(std::vector<double>{0, 0, 0}, 1.0), 0.25);
}

TEST(Rsgd, VanishingStepNearBoundary) {
  const g::Curvature c(1.0);
  const double r = std::sqrt(0.999);
  const g::BallPoint theta = g::BallPoint::from({r, 0.0}, c);
  RsgdState s;
  s.lr = 0.01;
  const std::vector<double> grad{0.3, -0.5};
  const g::BallPoint out = rsgd_step(theta, grad, s);
  const double move = std::hypot(out.coords()[0] - r, out.coords()[1]);
  EXPECT_LT(move, 1e-6);
  EXPECT_NEAR(rsgd_scale(theta.coords(), 1.0), 2.5e-7, 1e-18);
}

TEST(Rsgd, MatchesRescaledSgd) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> theta(4), grad(4);
    for (double& v : theta) v = u(rng);
    for (double& v : grad) v = u(rng);
    const double lr = 0.05;
    RsgdState rs;
    rs.lr = lr;
    const g::BallPoint out = rsgd_step(g::BallPoint::from(theta, g::Curvature(1.0)), grad, rs);

    Tensor p({4}, theta);
    const Tensor gt({4}, grad);
    SgdState ss;
    ss.momentum = 0.0;
    ss.weight_decay = 0.0;
    const double n2 = g::raw::sq_norm(theta);
    sgd_step({&p}, {&gt}, ss, lr * (1 - n2) * (1 - n2) / 4);
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(out.coords()[i], p[i], 1e-15);
  }
}

TEST(Rsgd, GeneralCurvatureFactor) {
  const std::vector<double> theta{0.3, 0.1};
  const double c = 2.5;
  const double n = c * (0.09 + 0.01);
  EXPECT_DOUBLE_EQ(rsgd_scale(theta, c), (1 - n) * (1 - n) / 4);
}

TEST(Rsgd, IteratesStayInsideBall) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 1.0);
  for (double c : {0.25, 1.0, 4.0}) {
    std::vector<double> theta(3, 0.0);
    RsgdState s;
    s.curvature = g::Curvature(c);
    for (int step = 0; step < 10000; ++step) {
      std::vector<double> grad(3);
      for (double& v : grad) v = 50.0 * n(rng);
      rsgd_update(theta, grad, s, 1.0);
      ASSERT_LT(c * g::raw::sq_norm(theta), 1.0) << "step " << step;
    }
  }
}

TEST(Rsgd, DescentOnQuadratic) {
  // loss = |log0(theta) - target|^2 / 2; gradient via finite differences.
  const g::Curvature c(1.0);
  const std::vector<double> target{0.4, -0.2};
  auto loss = [&](std::span<const double> th) {
    const auto v = g::log0(g::BallPoint::from({th.begin(), th.end()}, c)).coords;
    return 0.5 * (std::pow(v[0] - target[0], 2) + std::pow(v[1] - target[1], 2));
  };
  std::vector<double> theta{-0.3, 0.5};
  RsgdState s;
  s.lr = 0.5;
  double prev = loss(theta);
  for (int i = 0; i < 100; ++i) {
    const auto grad = finite_diff_grad(loss, theta);
    rsgd_update(theta, grad, s, s.lr);
    const double now = loss(theta);
    EXPECT_LE(now, prev + 1e-15);
    prev = now;
  }
  EXPECT_LT(prev, 1e-3);
}

TEST(FiniteDiff, QuadraticIsExact) {
  std::vector<double> theta{0.3, -1.2, 2.0};
  auto loss = [](std::span<const double> x) { return 0.5 * g::raw::sq_norm(x); };
  const auto grad = finite_diff_grad(loss, theta);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(grad[i], theta[i], 1e-9);
  auto poly = [](std::span<const double> x) { return 3 * x[0] * x[1] - x[2] * x[2] + 2 * x[0] + 7; };
  const auto gp = finite_diff_grad(poly, theta);
  EXPECT_NEAR(gp[0], 3 * theta[1] + 2, 1e-9);
  EXPECT_NEAR(gp[1], 3 * theta[0], 1e-9);
  EXPECT_NEAR(gp[2], -2 * theta[2], 1e-9);
}

TEST(FiniteDiff, ConstantAndNonFinite) {
  const auto grad = finite_diff_grad([](std::span<const double>) { return 4.0; }, {1.0, 2.0});
  EXPECT_EQ(grad, (std::vector<double>{0.0, 0.0}));
  EXPECT_THROW(finite_diff_grad([](std::span<const double> x) { return std::log(x[0]); }, {0.0}),
               std::runtime_error);
}

TEST(FiniteDiff, ForwardSchemeIsFirstOrder) {
  auto cube = [](std::span<const double> x) { return x[0] * x[0] * x[0]; };
  const double h = 1e-4;
  const auto fwd = finite_diff_grad(cube, {1.0}, h, DiffScheme::Forward);
  EXPECT_NEAR(fwd[0], 3.0 + 3 * h, 1e-6);
}

TEST(FiniteDiff, DistanceGradientMatchesAnalytic) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  const g::Curvature c(1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> x(3), y(3);
    for (double& v : x) v = u(rng);
    for (double& v : y) v = u(rng);
    const g::BallPoint yp = g::BallPoint::from(y, c);
    auto loss = [&](std::span<const double> p) { return g::distance(g::BallPoint::from({p.begin(), p.end()}, c), yp); };
    const auto fd = finite_diff_grad(loss, x, 1e-5);
    const auto an = g::distance_grad_x(g::BallPoint::from(x, c), yp);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(fd[i], an[i], 1e-5);
  }
}

TEST(CompareGradients, ReportsWorstCoordinate) {
  const std::vector<double> a{1.0, 2.0, 3.0}, n{1.0, 2.2, 3.0};
  const GradCheckResult r = compare_gradients(a, n);
  EXPECT_EQ(r.worst_index, 1u);
  EXPECT_NEAR(r.max_rel_error, 0.2 / 2.2, 1e-12);
  EXPECT_NEAR(r.max_abs_error, 0.2, 1e-12);
}

}  // namespace
