#pragma once

// Regular pixel-grid graphs and the resampling stages that bracket the
// hyperbolic kernel layer.

#include <cstddef>
#include <utility>
#include <vector>

#include "fisheyehdk/tensor.hpp"

namespace fhdk {

using FeatureMap = Tensor;

struct GridGraph {
  int height = 0;
  int width = 0;
  int connectivity = 4;
  /// Undirected edges stored once with first < second.
  std::vector<std::pair<int, int>> edges;
  /// CSR neighbor lists (both directions), row-major node order.
  std::vector<int> offsets;
  std::vector<int> neighbors;

  int num_nodes() const { return height * width; }
  int degree(int node) const { return offsets[node + 1] - offsets[node]; }
};

/// Nodes are indexed row-major. Throws std::invalid_argument for
/// connectivity other than 4 or 8, or non-positive sizes.
GridGraph build_grid_graph(int height, int width, int connectivity = 4);

/// Mean over 2^m x 2^m blocks. Rejects dimensions not divisible by 2^m.
FeatureMap downsample_avg(const FeatureMap& f, int m);
FeatureMap downsample_avg_backward(const FeatureMap& grad_out, int m);

/// [B, C, H, W] -> [B, H*W, C] (node-major).
Tensor flatten_to_nodes(const FeatureMap& f);
/// [B, N, C] -> [B, C, height, width].
FeatureMap unflatten_nodes(const Tensor& nodes, int height, int width);

/// Corner-aligned bilinear resize; out_h >= H and out_w >= W.
FeatureMap upsample_bilinear(const FeatureMap& f, int out_h, int out_w);
FeatureMap upsample_bilinear_backward(const FeatureMap& grad_out, int in_h, int in_w);

/// Row i of the result is x_i plus the sum of its neighbors, divided by
/// 1 + deg(i) when `normalize` is set. Input/output shape [B, N, d].
Tensor aggregate_neighbors(const Tensor& nodes, const GridGraph& g, bool normalize = true);
Tensor aggregate_neighbors_backward(const Tensor& grad_out, const GridGraph& g,
                                    bool normalize = true);

}  // namespace fhdk
