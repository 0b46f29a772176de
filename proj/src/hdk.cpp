#include "fisheyehdk/hdk.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>

namespace fhdk {

static_assert(std::endian::native == std::endian::little,
              "kernel-field serialization assumes a little-endian host");

void HdkConfig::validate() const {
  if (kernel_h < 1 || kernel_w < 1 || kernel_h % 2 == 0 || kernel_w % 2 == 0) {
    throw std::invalid_argument("HDK kernel dims must be odd and positive");
  }
  if (downsample < 0) throw std::invalid_argument("HDK downsample exponent must be >= 0");
  if (!(eps > 0.0 && eps < 1.0)) throw std::invalid_argument("HDK ball margin must be in (0, 1)");
  if (connectivity != 4 && connectivity != 8) {
    throw std::invalid_argument("HDK graph connectivity must be 4 or 8");
  }
}

void HdkParams::validate() const {
  config.validate();
  if (weight.rank() != 2 || weight.dim(0) != config.out_channels() || weight.dim(1) < 1) {
    throw std::invalid_argument("HDK weight shape " + shape_string(weight.shape()) +
                                " does not match kernel " + std::to_string(config.kernel_h) + "x" +
                                std::to_string(config.kernel_w));
  }
  if (bias.rank() != 1 || bias.dim(0) != config.out_channels()) {
    throw std::invalid_argument("HDK bias shape " + shape_string(bias.shape()) + " is invalid");
  }
  if (config.curvature.value() * gyro::raw::sq_norm(bias.values()) >= 1.0) {
    throw std::domain_error("HDK bias lies outside the Poincare ball");
  }
}

HdkParams init_hdk_params(int d, const HdkConfig& config, std::uint64_t seed) {
  config.validate();
  if (d < 1) throw std::invalid_argument("init_hdk_params: feature dimension must be >= 1");
  const int fan_out = config.out_channels();
  const double bound = std::sqrt(6.0 / (d + fan_out));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-bound, bound);
  HdkParams p{config, Tensor({fan_out, d}), Tensor({fan_out})};
  for (double& w : p.weight.values()) w = dist(rng);
  return p;
}

KernelField zero_kernel_field(int batch, int height, int width, int kernel_h, int kernel_w) {
  return KernelField{Tensor({batch, 2 * kernel_h * kernel_w, height, width}), kernel_h, kernel_w};
}

namespace {

// Scratch buffers for one node's pass through the ball.
struct NodeState {
  std::vector<double> h_raw, h, u, z, p_raw, p, m_raw, m;

  NodeState(int d, int k)
      : h_raw(d), h(d), u(d), z(k), p_raw(k), p(k), m_raw(k), m(k) {}
};

void node_forward(std::span<const double> feat, const HdkParams& params, NodeState& s,
                  std::span<double> out) {
  const double c = params.config.curvature.value();
  const double eps = params.config.eps;
  const int d = params.in_channels();
  const int k = params.config.out_channels();
  gyro::raw::exp0(feat, c, s.h_raw);
  gyro::raw::project(s.h_raw, c, eps, s.h);
  gyro::raw::log0(s.h, c, s.u);
  const double* w = params.weight.data();
  for (int r = 0; r < k; ++r) {
    double acc = 0.0;
    for (int j = 0; j < d; ++j) acc += w[static_cast<std::size_t>(r) * d + j] * s.u[j];
    s.z[r] = acc;
  }
  gyro::raw::exp0(s.z, c, s.p_raw);
  gyro::raw::project(s.p_raw, c, eps, s.p);
  gyro::raw::mobius_add(s.p, params.bias.values(), c, s.m_raw);
  gyro::raw::project(s.m_raw, c, eps, s.m);
  gyro::raw::log0(s.m, c, out);
}

void node_backward(std::span<const double> feat, const HdkParams& params, NodeState& s,
                   std::span<const double> grad_out, std::span<double> grad_feat,
                   std::span<double> grad_w, std::span<double> grad_b) {
  const double c = params.config.curvature.value();
  const double eps = params.config.eps;
  const int d = params.in_channels();
  const int k = params.config.out_channels();
  std::vector<double> out(k);
  node_forward(feat, params, s, out);

  std::vector<double> g_m(k, 0.0), g_mraw(k, 0.0), g_p(k, 0.0), g_praw(k, 0.0), g_z(k, 0.0);
  gyro::raw::log0_vjp(s.m, c, grad_out, g_m);
  gyro::raw::project_vjp(s.m_raw, c, eps, g_m, g_mraw);
  gyro::raw::mobius_add_vjp(s.p, params.bias.values(), c, g_mraw, g_p, grad_b);
  gyro::raw::project_vjp(s.p_raw, c, eps, g_p, g_praw);
  gyro::raw::exp0_vjp(s.z, c, g_praw, g_z);

  const double* w = params.weight.data();
  std::vector<double> g_u(d, 0.0);
  for (int r = 0; r < k; ++r) {
    const double gz = g_z[r];
    for (int j = 0; j < d; ++j) {
      grad_w[static_cast<std::size_t>(r) * d + j] += gz * s.u[j];
      g_u[j] += w[static_cast<std::size_t>(r) * d + j] * gz;
    }
  }
  std::vector<double> g_h(d, 0.0), g_hraw(d, 0.0);
  gyro::raw::log0_vjp(s.h, c, g_u, g_h);
  gyro::raw::project_vjp(s.h_raw, c, eps, g_h, g_hraw);
  gyro::raw::exp0_vjp(feat, c, g_hraw, grad_feat);
}

}  // namespace

KernelField hdk_forward(const FeatureMap& f, const HdkParams& params, HdkTrace* trace) {
  require_rank4(f, "hdk_forward");
  params.validate();
  if (f.dim(1) != params.in_channels()) {
    throw std::invalid_argument("hdk_forward: input has " + std::to_string(f.dim(1)) +
                                " channels, HDK expects " + std::to_string(params.in_channels()));
  }
  const HdkConfig& cfg = params.config;
  const int h = f.dim(2), w = f.dim(3);
  const FeatureMap pooled = downsample_avg(f, cfg.downsample);
  const int ph = pooled.dim(2), pw = pooled.dim(3);
  Tensor nodes = flatten_to_nodes(pooled);
  GridGraph graph = build_grid_graph(ph, pw, cfg.connectivity);

  const int b = nodes.dim(0), n_nodes = nodes.dim(1), d = nodes.dim(2);
  const int k = cfg.out_channels();
  Tensor tangent({b, n_nodes, k});
#pragma omp parallel
  {
    NodeState scratch(d, k);
#pragma omp for collapse(2) schedule(static)
    for (int n = 0; n < b; ++n) {
      for (int i = 0; i < n_nodes; ++i) {
        const std::size_t node = static_cast<std::size_t>(n) * n_nodes + i;
        node_forward({nodes.data() + node * d, static_cast<std::size_t>(d)}, params, scratch,
                     {tangent.data() + node * k, static_cast<std::size_t>(k)});
      }
    }
  }
  const Tensor aggregated = aggregate_neighbors(tangent, graph, cfg.normalize);
  FeatureMap coarse = unflatten_nodes(aggregated, ph, pw);
  KernelField field{upsample_bilinear(coarse, h, w), cfg.kernel_h, cfg.kernel_w};
  if (trace) {
    trace->in_h = h;
    trace->in_w = w;
    trace->pooled_h = ph;
    trace->pooled_w = pw;
    trace->pooled_nodes = std::move(nodes);
    trace->graph = std::move(graph);
  }
  return field;
}

HdkGrads hdk_backward(const HdkTrace& trace, const HdkParams& params, const Tensor& grad_field) {
  const HdkConfig& cfg = params.config;
  const int k = cfg.out_channels();
  const int d = params.in_channels();
  const int b = trace.pooled_nodes.dim(0);
  const int n_nodes = trace.pooled_nodes.dim(1);
  if (grad_field.rank() != 4 || grad_field.dim(0) != b || grad_field.dim(1) != k ||
      grad_field.dim(2) != trace.in_h || grad_field.dim(3) != trace.in_w) {
    throw std::invalid_argument("hdk_backward: gradient shape " +
                                shape_string(grad_field.shape()) + " does not match the trace");
  }
  const FeatureMap g_coarse = upsample_bilinear_backward(grad_field, trace.pooled_h, trace.pooled_w);
  const Tensor g_agg = flatten_to_nodes(g_coarse);
  const Tensor g_tangent = aggregate_neighbors_backward(g_agg, trace.graph, cfg.normalize);

  // Per-batch partial sums keep the reduction order independent of threading.
  std::vector<Tensor> gw_parts(b, Tensor({k, d}));
  std::vector<Tensor> gb_parts(b, Tensor({k}));
  Tensor g_nodes({b, n_nodes, d});
#pragma omp parallel
  {
    NodeState scratch(d, k);
#pragma omp for schedule(static)
    for (int n = 0; n < b; ++n) {
      for (int i = 0; i < n_nodes; ++i) {
        const std::size_t node = static_cast<std::size_t>(n) * n_nodes + i;
        node_backward({trace.pooled_nodes.data() + node * d, static_cast<std::size_t>(d)}, params,
                      scratch, {g_tangent.data() + node * k, static_cast<std::size_t>(k)},
                      {g_nodes.data() + node * d, static_cast<std::size_t>(d)},
                      gw_parts[n].values(), gb_parts[n].values());
      }
    }
  }
  HdkGrads grads{FeatureMap(), Tensor({k, d}), Tensor({k})};
  for (int n = 0; n < b; ++n) {
    axpy(1.0, gw_parts[n].values(), grads.weight.values());
    axpy(1.0, gb_parts[n].values(), grads.bias.values());
  }
  const FeatureMap g_pooled = unflatten_nodes(g_nodes, trace.pooled_h, trace.pooled_w);
  grads.input = downsample_avg_backward(g_pooled, cfg.downsample);
  return grads;
}

std::vector<TapPosition> kernel_positions(const KernelField& field, int batch, int y, int x,
                                          int dilation) {
  const Tensor& t = field.data;
  if (batch < 0 || batch >= t.dim(0) || y < 0 || y >= t.dim(2) || x < 0 || x >= t.dim(3)) {
    throw std::out_of_range("kernel_positions: pixel (" + std::to_string(y) + ", " +
                            std::to_string(x) + ") outside the field");
  }
  if (dilation < 1) throw std::invalid_argument("kernel_positions: dilation must be >= 1");
  const int rh = (field.kernel_h - 1) / 2;
  const int rw = (field.kernel_w - 1) / 2;
  std::vector<TapPosition> taps;
  taps.reserve(field.taps());
  for (int r = 0; r < field.kernel_h; ++r) {
    for (int s = 0; s < field.kernel_w; ++s) {
      const int tap = r * field.kernel_w + s;
      taps.push_back({tap, y + (r - rh) * dilation + field.dy(batch, tap, y, x),
                      x + (s - rw) * dilation + field.dx(batch, tap, y, x)});
    }
  }
  return taps;
}

void write_kernel_field(std::ostream& os, const KernelField& field) {
  for (int axis = 0; axis < 4; ++axis) {
    const std::int64_t dim = field.data.dim(axis);
    os.write(reinterpret_cast<const char*>(&dim), sizeof dim);
  }
  os.write(reinterpret_cast<const char*>(field.data.data()),
           static_cast<std::streamsize>(field.data.size() * sizeof(double)));
  if (!os) throw std::runtime_error("write_kernel_field: stream write failed");
}

KernelField read_kernel_field(std::istream& is) {
  std::vector<int> shape(4);
  for (int& dim : shape) {
    std::int64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!is || v < 1 || v > (1 << 24)) throw std::runtime_error("read_kernel_field: bad header");
    dim = static_cast<int>(v);
  }
  const int taps = shape[1] / 2;
  const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(taps))));
  if (shape[1] % 2 != 0 || side * side != taps) {
    throw std::runtime_error("read_kernel_field: channel count " + std::to_string(shape[1]) +
                             " is not 2*k*k");
  }
  Tensor data(shape);
  is.read(reinterpret_cast<char*>(data.data()),
          static_cast<std::streamsize>(data.size() * sizeof(double)));
  if (!is) throw std::runtime_error("read_kernel_field: truncated payload");
  return KernelField{std::move(data), side, side};
}

}  // namespace fhdk
