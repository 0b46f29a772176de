#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fisheyehdk/gyro.hpp"

namespace {

using namespace fhdk::gyro;

std::vector<double> random_in_ball(std::mt19937_64& rng, std::size_t d, Curvature c, double max_frac = 0.95) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> v(d);
  double s = 0.0;
  for (double& x : v) {
    x = n(rng);
    s += x * x;
  }
  const double r = max_frac * c.radius() * std::pow(u(rng), 1.0 / d) / std::sqrt(s);
  for (double& x : v) x *= r;
  return v;
}

void expect_near_vec(std::span<const double> a, std::span<const double> b, double tol) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], tol) << "component " << i;
}

TEST(Curvature, RejectsNonPositive) {
  EXPECT_THROW(Curvature(0.0), std::invalid_argument);
  EXPECT_THROW(Curvature(-1.0), std::invalid_argument);
  EXPECT_THROW(Curvature(std::nan("")), std::invalid_argument);
  EXPECT_DOUBLE_EQ(Curvature(4.0).radius(), 0.5);
}

TEST(BallPoint, RejectsOutsidePoints) {
  EXPECT_THROW(BallPoint::from({1.0, 0.0}, Curvature(1.0)), std::domain_error);
  EXPECT_THROW(BallPoint::from({0.6, 0.0}, Curvature(4.0)), std::domain_error);
  EXPECT_NO_THROW(BallPoint::from({0.49, 0.0}, Curvature(4.0)));
}

TEST(ConformalFactor, Examples) {
  EXPECT_DOUBLE_EQ(conformal_factor(BallPoint::origin(3, Curvature(0.3))), 2.0);
  const double s = std::sqrt(0.25);
  EXPECT_DOUBLE_EQ(conformal_factor(BallPoint::from({s, s}, Curvature(1.0))), 4.0);
  EXPECT_NEAR(conformal_factor(BallPoint::from({1.0, 0.0}, Curvature(0.25))), 2.6666666666666665, 1e-15);
  const std::vector<double> outside{1.0, 0.0};
  EXPECT_THROW(conformal_factor(outside, Curvature(1.0)), std::domain_error);
}

TEST(MobiusAdd, IdentityAndInverse) {
  std::mt19937_64 rng(3);
  const Curvature c(1.0);
  for (int i = 0; i < 50; ++i) {
    const BallPoint x = BallPoint::from(random_in_ball(rng, 4, c), c);
    expect_near_vec(mobius_add(x, BallPoint::origin(4, c)).coords(), x.coords(), 1e-12);
    const BallPoint z = mobius_add(x.negated(), x);
    EXPECT_LT(std::sqrt(z.sq_norm()), 1e-12);
  }
}

TEST(MobiusAdd, EuclideanLimit) {
  const Curvature c(1e-9);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-0.7, 0.7);
  for (int i = 0; i < 20; ++i) {
    const BallPoint x = BallPoint::from({u(rng), u(rng)}, c);
    const BallPoint y = BallPoint::from({u(rng), u(rng)}, c);
    const BallPoint s = mobius_add(x, y);
    for (int k = 0; k < 2; ++k) EXPECT_NEAR(s.coords()[k], x.coords()[k] + y.coords()[k], 1e-6);
  }
}

TEST(MobiusAdd, ErrorShrinksWithCurvature) {
  const std::vector<double> xv{0.3, -0.2}, yv{0.25, 0.4};
  double prev = std::numeric_limits<double>::infinity();
  for (double c : {1e-2, 1e-4, 1e-6, 1e-8}) {
    const BallPoint s = mobius_add(BallPoint::from(xv, Curvature(c)), BallPoint::from(yv, Curvature(c)));
    const double err = std::hypot(s.coords()[0] - 0.55, s.coords()[1] - 0.2);
    EXPECT_LT(err, prev);
    prev = err;
  }
}

TEST(MobiusAdd, MismatchThrows) {
  const BallPoint a = BallPoint::origin(2, Curvature(1.0));
  EXPECT_THROW(mobius_add(a, BallPoint::origin(3, Curvature(1.0))), std::invalid_argument);
  EXPECT_THROW(mobius_add(a, BallPoint::origin(2, Curvature(2.0))), std::invalid_argument);
}

TEST(MobiusScalarMul, Examples) {
  const Curvature c(1.0);
  const BallPoint x = BallPoint::from({0.5, 0.0}, c);
  const BallPoint y = mobius_scalar_mul(2.0, x);
  // tanh(2 artanh(0.5)) = 2 * 0.5 / (1 + 0.25)
  EXPECT_NEAR(y.coords()[0], 0.8, 1e-15);
  EXPECT_EQ(y.coords()[1], 0.0);
  expect_near_vec(mobius_scalar_mul(1.0, x).coords(), x.coords(), 1e-15);
  EXPECT_EQ(mobius_scalar_mul(3.0, BallPoint::origin(2, c)).sq_norm(), 0.0);
  EXPECT_EQ(mobius_scalar_mul(0.0, x).sq_norm(), 0.0);
}

TEST(MobiusScalarMul, Compatibility) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> a(-2.0, 2.0);
  for (double cv : {0.25, 1.0, 4.0}) {
    const Curvature c(cv);
    for (int i = 0; i < 100; ++i) {
      const BallPoint x = BallPoint::from(random_in_ball(rng, 3, c, 0.8), c);
      const double s = a(rng), t = a(rng) * 0.5;
      expect_near_vec(mobius_scalar_mul(s * t, x).coords(), mobius_scalar_mul(s, mobius_scalar_mul(t, x)).coords(), 1e-7);
    }
  }
}

TEST(MobiusMatvec, Examples) {
  const Curvature c(1.0);
  const BallPoint x = BallPoint::from({0.3, -0.4}, c);
  const std::vector<double> eye{1, 0, 0, 1}, zero(4, 0.0), twice{2, 0, 0, 2};
  expect_near_vec(mobius_matvec({eye, 2, 2}, x).coords(), x.coords(), 1e-14);
  EXPECT_EQ(mobius_matvec({zero, 2, 2}, x).sq_norm(), 0.0);
  const BallPoint p = exp0({{0.1, 0.0}}, c);
  expect_near_vec(mobius_matvec({twice, 2, 2}, p).coords(), exp0({{0.2, 0.0}}, c).coords(), 1e-15);
  EXPECT_NEAR(exp0({{0.2, 0.0}}, c).coords()[0], std::tanh(0.2), 1e-16);
  const std::vector<double> wide(6, 0.1);
  EXPECT_THROW(mobius_matvec({wide, 2, 3}, x), std::invalid_argument);
  EXPECT_EQ(mobius_matvec({wide, 3, 2}, x).dim(), 3u);
}

TEST(ExpLog, Examples) {
  const Curvature c(1.0);
  const BallPoint x = BallPoint::from({0.2, 0.1}, c);
  expect_near_vec(exp_map(x, {{0.0, 0.0}}).coords(), x.coords(), 0.0);
  const TangentVector zero = log_map(x, x);
  EXPECT_NEAR(zero.coords[0], 0.0, 1e-15);
  EXPECT_NEAR(zero.coords[1], 0.0, 1e-15);
  EXPECT_NEAR(exp0({{1.0, 0.0}}, c).coords()[0], 0.76159415595576488812, 1e-15);
  // exp_0 is the x = 0 case of exp_x.
  const TangentVector v{{0.7, -1.3}};
  expect_near_vec(exp_map(BallPoint::origin(2, c), v).coords(), exp0(v, c).coords(), 1e-15);
}

TEST(ExpLog, OriginRoundTripUpToNormFive) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const Curvature c(1.0);
  for (int i = 0; i < 200; ++i) {
    TangentVector v{{u(rng), u(rng), u(rng)}};
    const double n = std::sqrt(v.coords[0] * v.coords[0] + v.coords[1] * v.coords[1] + v.coords[2] * v.coords[2]);
    const double target = 5.0 * std::abs(u(rng));
    for (double& x : v.coords) x *= target / n;
    expect_near_vec(log0(exp0(v, c)).coords, v.coords, 1e-9);
  }
}

TEST(ExpLog, RandomBasePointRoundTrip) {
  std::mt19937_64 rng(19);
  for (double cv : {0.25, 1.0, 4.0}) {
    const Curvature c(cv);
    for (int i = 0; i < 100; ++i) {
      const BallPoint x = BallPoint::from(random_in_ball(rng, 3, c, 0.9), c);
      const BallPoint y = BallPoint::from(random_in_ball(rng, 3, c, 0.9), c);
      expect_near_vec(exp_map(x, log_map(x, y)).coords(), y.coords(), 1e-8);
    }
  }
}

TEST(Distance, Examples) {
  const Curvature c(1.0);
  const BallPoint o = BallPoint::origin(2, c);
  EXPECT_NEAR(distance(o, BallPoint::from({0.5, 0.0}, c)), 1.0986122886681098, 1e-14);
  const BallPoint x = BallPoint::from({0.3, 0.2}, c), y = BallPoint::from({-0.1, 0.6}, c);
  EXPECT_EQ(distance(x, x), 0.0);
  EXPECT_NEAR(distance(x, y), distance(y, x), 1e-15);
  EXPECT_GT(distance(x, y), 0.0);
}

TEST(Distance, CurvatureScaling) {
  // Radius-scaled points at curvature c sit at distance d(c=1) / sqrt(c).
  const Curvature one(1.0), four(4.0);
  const double d1 = distance(BallPoint::from({0.3, 0.2}, one), BallPoint::from({-0.1, 0.6}, one));
  const double d4 = distance(BallPoint::from({0.15, 0.1}, four), BallPoint::from({-0.05, 0.3}, four));
  EXPECT_NEAR(d4, d1 / 2.0, 1e-13);
}

TEST(Distance, MonotoneAlongGeodesic) {
  const Curvature c(2.0);
  const BallPoint o = BallPoint::origin(2, c);
  double prev = 0.0;
  for (double t = 0.1; t < 4.0; t += 0.1) {
    const BallPoint p = exp0({{t * 0.6, t * 0.8}}, c);
    const double d = distance(o, p);
    EXPECT_GT(d, prev);
    // distance from the origin equals lambda_0 |v| = 2|v| for unit-speed rays.
    EXPECT_NEAR(d, 2.0 * t, 1e-8);
    prev = d;
  }
}

TEST(ProjectToBall, Examples) {
  const std::vector<double> inside{0.3, 0.0}, outside{2.0, 0.0}, unit{1.0, 0.0};
  const BallPoint a = project_to_ball(inside, Curvature(1.0), 1e-5);
  EXPECT_EQ(a.coords()[0], 0.3);
  const BallPoint b = project_to_ball(outside, Curvature(1.0), 1e-5);
  EXPECT_NEAR(b.coords()[0], 0.99999, 1e-15);
  const BallPoint d = project_to_ball(unit, Curvature(4.0), 1e-5);
  EXPECT_NEAR(std::sqrt(d.sq_norm()), 0.5 * (1 - 1e-5), 1e-15);
}

TEST(Invariants, OutputsStayInsideBall) {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> big(-50.0, 50.0);
  for (double cv : {0.25, 1.0, 4.0}) {
    const Curvature c(cv);
    for (int i = 0; i < 300; ++i) {
      const BallPoint x = BallPoint::from(random_in_ball(rng, 3, c, 0.99999), c);
      const BallPoint y = BallPoint::from(random_in_ball(rng, 3, c, 0.99999), c);
      const TangentVector v{{big(rng), big(rng), big(rng)}};
      for (const BallPoint& p : {mobius_add(x, y), mobius_scalar_mul(big(rng), x), exp_map(x, v), exp0(v, c)}) {
        EXPECT_LT(cv * p.sq_norm(), 1.0);
      }
    }
  }
}

TEST(DistanceGrad, MatchesFiniteDifferences) {
  const Curvature c(1.0);
  const BallPoint y = BallPoint::from({0.1, -0.5}, c);
  const std::vector<double> xv{0.4, 0.2};
  const auto g = distance_grad_x(BallPoint::from(xv, c), y);
  for (int k = 0; k < 2; ++k) {
    auto xp = xv, xm = xv;
    xp[k] += 1e-6;
    xm[k] -= 1e-6;
    const double fd = (distance(BallPoint::from(xp, c), y) - distance(BallPoint::from(xm, c), y)) / 2e-6;
    EXPECT_NEAR(g[k], fd, 1e-7);
  }
}

}  // namespace
