#include "fisheyehdk/gradcheck.hpp"

#include <random>

#include "fisheyehdk/dconv.hpp"
#include "fisheyehdk/gyro.hpp"
#include "fisheyehdk/hdk.hpp"
#include "fisheyehdk/metrics.hpp"

namespace fhdk {

namespace {

constexpr double kStep = 1e-5;
constexpr double kFloor = 1e-5;

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(gen_); }
  Tensor tensor(std::vector<int> shape, double lo, double hi) {
    Tensor t(std::move(shape));
    for (double& v : t.values()) v = uniform(lo, hi);
    return t;
  }
  int index(int n) { return static_cast<int>(gen_() % static_cast<std::uint64_t>(n)); }

 private:
  std::mt19937_64 gen_;
};

double readout(const Tensor& out, const Tensor& r) {
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * r[i];
  return s;
}

// Finite differences of `loss` with respect to `target`, which is modified
// in place during probing and restored afterwards.
std::vector<double> numeric(Tensor& target, const std::function<double()>& loss) {
  return finite_diff_grad(
      [&](std::span<const double> p) {
        std::copy(p.begin(), p.end(), target.values().begin());
        return loss();
      },
      target.storage(), kStep, DiffScheme::Central);
}

GradCheckCase make_case(std::string name, Tensor& target, const Tensor& analytic, const std::function<double()>& loss,
                        double tol) {
  const std::vector<double> saved = target.storage();
  const std::vector<double> num = numeric(target, loss);
  target.storage() = saved;
  GradCheckCase c;
  c.name = std::move(name);
  c.result = compare_gradients(analytic.values(), num, kFloor);
  c.coords = num.size();
  c.passed = c.result.max_rel_error <= tol;
  return c;
}

// Offsets whose fractional part stays inside (0.15, 0.85) so that no probe
// crosses a bilinear cell boundary.
Tensor smooth_offsets(Rng& rng, std::vector<int> shape) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = static_cast<double>(rng.index(3) - 1) + rng.uniform(0.15, 0.85);
  return t;
}

}  // namespace

std::vector<GradCheckCase> run_gradcheck_suite(std::uint64_t seed, double tol) {
  Rng rng(seed);
  std::vector<GradCheckCase> out;

  {
    Tensor x = rng.tensor({1, 2, 4, 4}, -1, 1);
    ConvParams p = make_conv_params(2, 2, 3);
    p.weight = rng.tensor({2, 2, 3, 3}, -0.5, 0.5);
    p.bias = rng.tensor({2}, -0.5, 0.5);
    const Tensor r = rng.tensor({1, 2, 4, 4}, -1, 1);
    auto loss = [&] { return readout(conv2d(x, p), r); };
    const ConvGrads g = conv2d_backward(x, p, r);
    out.push_back(make_case("conv2d/input", x, g.input, loss, tol));
    out.push_back(make_case("conv2d/weight", p.weight, g.weight, loss, tol));
    out.push_back(make_case("conv2d/bias", p.bias, g.bias, loss, tol));
  }

  for (bool restrict : {false, true}) {
    const std::string tag = restrict ? "rdc_conv2d/" : "deform_conv2d/";
    Tensor x = rng.tensor({1, 2, 4, 4}, -1, 1);
    ConvParams p = make_conv_params(2, 2, 3);
    p.weight = rng.tensor({2, 2, 3, 3}, -0.5, 0.5);
    p.bias = rng.tensor({2}, -0.5, 0.5);
    KernelField field{smooth_offsets(rng, {1, 18, 4, 4}), 3, 3};
    const Tensor r = rng.tensor({1, 2, 4, 4}, -1, 1);
    auto loss = [&] {
      return readout(restrict ? rdc_conv2d(x, field, p) : deform_conv2d(x, field, p), r);
    };
    const ConvGrads g = deform_conv2d_backward(x, field, p, r, restrict);
    out.push_back(make_case(tag + "input", x, g.input, loss, tol));
    out.push_back(make_case(tag + "weight", p.weight, g.weight, loss, tol));
    out.push_back(make_case(tag + "bias", p.bias, g.bias, loss, tol));
    out.push_back(make_case(tag + "offsets", field.data, g.field, loss, tol));
  }

  {
    const Tensor f = rng.tensor({1, 1, 4, 4}, -1, 1);
    Tensor coords({8, 2});
    for (int i = 0; i < 8; ++i) {
      coords[2 * i] = rng.index(5) - 1 + rng.uniform(0.15, 0.85);
      coords[2 * i + 1] = rng.index(5) - 1 + rng.uniform(0.15, 0.85);
    }
    const Tensor r = rng.tensor({8}, -1, 1);
    auto loss = [&] {
      double s = 0.0;
      for (int i = 0; i < 8; ++i) s += r[i] * bilinear_sample(f, 0, 0, coords[2 * i], coords[2 * i + 1]);
      return s;
    };
    Tensor analytic({8, 2});
    for (int i = 0; i < 8; ++i) {
      const SampleGrad g = bilinear_sample_grad(f, 0, 0, coords[2 * i], coords[2 * i + 1]);
      analytic[2 * i] = r[i] * g.dy;
      analytic[2 * i + 1] = r[i] * g.dx;
    }
    out.push_back(make_case("bilinear_sample/coords", coords, analytic, loss, tol));
  }

  {
    HdkConfig cfg;
    cfg.downsample = 1;
    Tensor x = rng.tensor({1, 3, 4, 4}, -0.4, 0.4);
    HdkParams p = init_hdk_params(3, cfg, seed + 1);
    p.bias = rng.tensor({cfg.out_channels()}, -0.05, 0.05);
    const Tensor r = rng.tensor({1, cfg.out_channels(), 4, 4}, -1, 1);
    auto loss = [&] { return readout(hdk_forward(x, p).data, r); };
    HdkTrace trace;
    hdk_forward(x, p, &trace);
    const HdkGrads g = hdk_backward(trace, p, r);
    out.push_back(make_case("hdk_forward/input", x, g.input, loss, tol));
    out.push_back(make_case("hdk_forward/weight", p.weight, g.weight, loss, tol));
    out.push_back(make_case("hdk_forward/bias", p.bias, g.bias, loss, tol));
  }

  {
    Tensor logits = rng.tensor({1, 3, 4, 4}, -2, 2);
    LabelMap labels(1, 4, 4);
    for (auto& l : labels.labels) l = static_cast<std::uint8_t>(rng.index(4) == 3 ? kVoidLabel : rng.index(3));
    labels.labels[0] = 0;
    const std::vector<double> w{0.5, 1.0, 2.0};
    auto loss = [&] { return weighted_cross_entropy(logits, labels, w).loss; };
    const Tensor analytic = weighted_cross_entropy(logits, labels, w).grad_logits;
    out.push_back(make_case("weighted_cross_entropy/logits", logits, analytic, loss, tol));
  }

  for (double c : {0.5, 1.0, 2.0}) {
    const gyro::Curvature curv(c);
    const double scale = 0.6 / std::sqrt(c * 3.0);
    Tensor x = rng.tensor({3}, -scale, scale);
    const gyro::BallPoint y = gyro::BallPoint::from({rng.uniform(-scale, scale), rng.uniform(-scale, scale),
                                                     rng.uniform(-scale, scale)},
                                                    curv);
    auto loss = [&] { return gyro::distance(gyro::BallPoint::from(x.storage(), curv), y); };
    const Tensor analytic({3}, gyro::distance_grad_x(gyro::BallPoint::from(x.storage(), curv), y));
    out.push_back(make_case("distance/x(c=" + std::to_string(c).substr(0, 3) + ")", x, analytic, loss, tol));
  }
  return out;
}

}  // namespace fhdk
