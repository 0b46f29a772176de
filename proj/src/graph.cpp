#include "fisheyehdk/graph.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace fhdk {

GridGraph build_grid_graph(int height, int width, int connectivity) {
  if (height < 1 || width < 1) {
    throw std::invalid_argument("build_grid_graph: height and width must be >= 1");
  }
  if (connectivity != 4 && connectivity != 8) {
    throw std::invalid_argument("build_grid_graph: connectivity must be 4 or 8, got " +
                                std::to_string(connectivity));
  }
  GridGraph g;
  g.height = height;
  g.width = width;
  g.connectivity = connectivity;

  // Forward half-neighborhood; each undirected edge is emitted once.
  std::vector<std::pair<int, int>> steps = {{0, 1}, {1, 0}};
  if (connectivity == 8) {
    steps.emplace_back(1, 1);
    steps.emplace_back(1, -1);
  }
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const int i = y * width + x;
      for (auto [dy, dx] : steps) {
        const int ny = y + dy;
        const int nx = x + dx;
        if (ny < 0 || ny >= height || nx < 0 || nx >= width) continue;
        const int j = ny * width + nx;
        g.edges.emplace_back(std::min(i, j), std::max(i, j));
      }
    }
  }

  const int n = g.num_nodes();
  std::vector<int> degree(n, 0);
  for (auto [i, j] : g.edges) {
    ++degree[i];
    ++degree[j];
  }
  g.offsets.assign(n + 1, 0);
  for (int i = 0; i < n; ++i) g.offsets[i + 1] = g.offsets[i] + degree[i];
  g.neighbors.assign(g.offsets[n], 0);
  std::vector<int> cursor(g.offsets.begin(), g.offsets.end() - 1);
  for (auto [i, j] : g.edges) {
    g.neighbors[cursor[i]++] = j;
    g.neighbors[cursor[j]++] = i;
  }
  for (int i = 0; i < n; ++i) {
    std::sort(g.neighbors.begin() + g.offsets[i], g.neighbors.begin() + g.offsets[i + 1]);
  }
  return g;
}

FeatureMap downsample_avg(const FeatureMap& f, int m) {
  require_rank4(f, "downsample_avg");
  if (m < 0) throw std::invalid_argument("downsample_avg: m must be >= 0");
  const int k = 1 << m;
  const int b = f.dim(0), c = f.dim(1), h = f.dim(2), w = f.dim(3);
  if (h % k != 0 || w % k != 0) {
    throw std::invalid_argument("downsample_avg: spatial dims " + std::to_string(h) + "x" +
                                std::to_string(w) + " not divisible by " + std::to_string(k));
  }
  if (m == 0) return f;
  const int oh = h / k, ow = w / k;
  FeatureMap out({b, c, oh, ow});
  const double inv = 1.0 / (static_cast<double>(k) * k);
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < b; ++n) {
    for (int ch = 0; ch < c; ++ch) {
      for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
          double acc = 0.0;
          for (int dy = 0; dy < k; ++dy) {
            for (int dx = 0; dx < k; ++dx) acc += f.at(n, ch, y * k + dy, x * k + dx);
          }
          out.at(n, ch, y, x) = acc * inv;
        }
      }
    }
  }
  return out;
}

FeatureMap downsample_avg_backward(const FeatureMap& grad_out, int m) {
  require_rank4(grad_out, "downsample_avg_backward");
  if (m == 0) return grad_out;
  const int k = 1 << m;
  const int b = grad_out.dim(0), c = grad_out.dim(1), oh = grad_out.dim(2), ow = grad_out.dim(3);
  FeatureMap grad({b, c, oh * k, ow * k});
  const double inv = 1.0 / (static_cast<double>(k) * k);
  for (int n = 0; n < b; ++n) {
    for (int ch = 0; ch < c; ++ch) {
      for (int y = 0; y < oh * k; ++y) {
        for (int x = 0; x < ow * k; ++x) grad.at(n, ch, y, x) = grad_out.at(n, ch, y / k, x / k) * inv;
      }
    }
  }
  return grad;
}

Tensor flatten_to_nodes(const FeatureMap& f) {
  require_rank4(f, "flatten_to_nodes");
  const int b = f.dim(0), c = f.dim(1), h = f.dim(2), w = f.dim(3);
  const int n_nodes = h * w;
  Tensor nodes({b, n_nodes, c});
  for (int n = 0; n < b; ++n) {
    for (int ch = 0; ch < c; ++ch) {
      const auto plane = f.plane(n, ch);
      for (int i = 0; i < n_nodes; ++i) {
        nodes[(static_cast<std::size_t>(n) * n_nodes + i) * c + ch] = plane[i];
      }
    }
  }
  return nodes;
}

FeatureMap unflatten_nodes(const Tensor& nodes, int height, int width) {
  if (nodes.rank() != 3 || nodes.dim(1) != height * width) {
    throw std::invalid_argument("unflatten_nodes: node tensor " + shape_string(nodes.shape()) +
                                " does not match " + std::to_string(height) + "x" +
                                std::to_string(width));
  }
  const int b = nodes.dim(0), n_nodes = nodes.dim(1), c = nodes.dim(2);
  FeatureMap f({b, c, height, width});
  for (int n = 0; n < b; ++n) {
    for (int ch = 0; ch < c; ++ch) {
      auto plane = f.plane(n, ch);
      for (int i = 0; i < n_nodes; ++i) {
        plane[i] = nodes[(static_cast<std::size_t>(n) * n_nodes + i) * c + ch];
      }
    }
  }
  return f;
}

namespace {

struct Lerp {
  int lo;
  int hi;
  double t;  // weight of `hi`
};

Lerp corner_aligned(int out_index, int out_size, int in_size) {
  if (out_size == 1 || in_size == 1) return {0, 0, 0.0};
  const double src = static_cast<double>(out_index) * (in_size - 1) / (out_size - 1);
  int lo = static_cast<int>(std::floor(src));
  lo = std::min(lo, in_size - 1);
  const int hi = std::min(lo + 1, in_size - 1);
  return {lo, hi, src - lo};
}

}  // namespace

FeatureMap upsample_bilinear(const FeatureMap& f, int out_h, int out_w) {
  require_rank4(f, "upsample_bilinear");
  const int b = f.dim(0), c = f.dim(1), h = f.dim(2), w = f.dim(3);
  if (out_h < h || out_w < w) {
    throw std::invalid_argument("upsample_bilinear: output must not be smaller than input");
  }
  if (out_h == h && out_w == w) return f;
  std::vector<Lerp> ys(out_h), xs(out_w);
  for (int y = 0; y < out_h; ++y) ys[y] = corner_aligned(y, out_h, h);
  for (int x = 0; x < out_w; ++x) xs[x] = corner_aligned(x, out_w, w);
  FeatureMap out({b, c, out_h, out_w});
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < b; ++n) {
    for (int ch = 0; ch < c; ++ch) {
      for (int y = 0; y < out_h; ++y) {
        const Lerp ly = ys[y];
        for (int x = 0; x < out_w; ++x) {
          const Lerp lx = xs[x];
          const double top = (1.0 - lx.t) * f.at(n, ch, ly.lo, lx.lo) + lx.t * f.at(n, ch, ly.lo, lx.hi);
          const double bot = (1.0 - lx.t) * f.at(n, ch, ly.hi, lx.lo) + lx.t * f.at(n, ch, ly.hi, lx.hi);
          out.at(n, ch, y, x) = (1.0 - ly.t) * top + ly.t * bot;
        }
      }
    }
  }
  return out;
}

FeatureMap upsample_bilinear_backward(const FeatureMap& grad_out, int in_h, int in_w) {
  require_rank4(grad_out, "upsample_bilinear_backward");
  const int b = grad_out.dim(0), c = grad_out.dim(1), out_h = grad_out.dim(2), out_w = grad_out.dim(3);
  if (out_h == in_h && out_w == in_w) return grad_out;
  std::vector<Lerp> ys(out_h), xs(out_w);
  for (int y = 0; y < out_h; ++y) ys[y] = corner_aligned(y, out_h, in_h);
  for (int x = 0; x < out_w; ++x) xs[x] = corner_aligned(x, out_w, in_w);
  FeatureMap grad({b, c, in_h, in_w});
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < b; ++n) {
    for (int ch = 0; ch < c; ++ch) {
      for (int y = 0; y < out_h; ++y) {
        const Lerp ly = ys[y];
        for (int x = 0; x < out_w; ++x) {
          const Lerp lx = xs[x];
          const double g = grad_out.at(n, ch, y, x);
          grad.at(n, ch, ly.lo, lx.lo) += (1.0 - ly.t) * (1.0 - lx.t) * g;
          grad.at(n, ch, ly.lo, lx.hi) += (1.0 - ly.t) * lx.t * g;
          grad.at(n, ch, ly.hi, lx.lo) += ly.t * (1.0 - lx.t) * g;
          grad.at(n, ch, ly.hi, lx.hi) += ly.t * lx.t * g;
        }
      }
    }
  }
  return grad;
}

namespace {

void check_nodes(const Tensor& nodes, const GridGraph& g, const char* what) {
  if (nodes.rank() != 3 || nodes.dim(1) != g.num_nodes()) {
    throw std::invalid_argument(std::string(what) + ": node tensor " +
                                shape_string(nodes.shape()) + " does not match graph with " +
                                std::to_string(g.num_nodes()) + " nodes");
  }
}

}  // namespace

Tensor aggregate_neighbors(const Tensor& nodes, const GridGraph& g, bool normalize) {
  check_nodes(nodes, g, "aggregate_neighbors");
  const int b = nodes.dim(0), n_nodes = nodes.dim(1), d = nodes.dim(2);
  Tensor out(nodes.shape());
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < b; ++n) {
    for (int i = 0; i < n_nodes; ++i) {
      const double* base = nodes.data() + static_cast<std::size_t>(n) * n_nodes * d;
      double* row = out.data() + (static_cast<std::size_t>(n) * n_nodes + i) * d;
      for (int k = 0; k < d; ++k) row[k] = base[static_cast<std::size_t>(i) * d + k];
      for (int e = g.offsets[i]; e < g.offsets[i + 1]; ++e) {
        const double* nb = base + static_cast<std::size_t>(g.neighbors[e]) * d;
        for (int k = 0; k < d; ++k) row[k] += nb[k];
      }
      if (normalize) {
        const double s = 1.0 / (1.0 + g.degree(i));
        for (int k = 0; k < d; ++k) row[k] *= s;
      }
    }
  }
  return out;
}

Tensor aggregate_neighbors_backward(const Tensor& grad_out, const GridGraph& g, bool normalize) {
  check_nodes(grad_out, g, "aggregate_neighbors_backward");
  if (!normalize) return aggregate_neighbors(grad_out, g, false);  // (A + I) is symmetric
  // (D^-1 (A + I))^T = (A + I) D^-1: scale rows first, then aggregate unnormalized.
  Tensor scaled = grad_out;
  const int b = grad_out.dim(0), n_nodes = grad_out.dim(1), d = grad_out.dim(2);
  for (int n = 0; n < b; ++n) {
    for (int i = 0; i < n_nodes; ++i) {
      const double s = 1.0 / (1.0 + g.degree(i));
      double* row = scaled.data() + (static_cast<std::size_t>(n) * n_nodes + i) * d;
      for (int k = 0; k < d; ++k) row[k] *= s;
    }
  }
  return aggregate_neighbors(scaled, g, false);
}

}  // namespace fhdk
