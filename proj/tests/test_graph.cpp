#include <gtest/gtest.h>

#include <random>
#include <set>

#include "fisheyehdk/graph.hpp"

namespace {

using namespace fhdk;

Tensor random_tensor(std::vector<int> shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = u(rng);
  return t;
}

TEST(GridGraph, SmallCases) {
  const GridGraph one = build_grid_graph(1, 1, 4);
  EXPECT_EQ(one.num_nodes(), 1);
  EXPECT_TRUE(one.edges.empty());
  const GridGraph g = build_grid_graph(3, 3, 4);
  EXPECT_EQ(g.num_nodes(), 9);
  EXPECT_EQ(g.edges.size(), 12u);
  EXPECT_EQ(g.degree(4), 4);
  EXPECT_EQ(g.degree(0), 2);
  EXPECT_EQ(g.degree(1), 3);
}

TEST(GridGraph, FourConnectedEdgeCount) {
  for (auto [h, w] : {std::pair{2, 5}, {4, 4}, {7, 3}}) {
    EXPECT_EQ(build_grid_graph(h, w, 4).edges.size(), static_cast<std::size_t>(h * (w - 1) + w * (h - 1)));
  }
}

TEST(GridGraph, EdgesAreNeighboursAndSymmetric) {
  for (int conn : {4, 8}) {
    const GridGraph g = build_grid_graph(4, 5, conn);
    std::set<std::pair<int, int>> directed;
    for (auto [i, j] : g.edges) {
      ASSERT_LT(i, j);
      ASSERT_GE(i, 0);
      ASSERT_LT(j, g.num_nodes());
      const int dy = std::abs(i / 5 - j / 5), dx = std::abs(i % 5 - j % 5);
      if (conn == 4) {
        EXPECT_EQ(dy + dx, 1);
      } else {
        EXPECT_LE(std::max(dy, dx), 1);
      }
    }
    for (int i = 0; i < g.num_nodes(); ++i) {
      for (int k = g.offsets[i]; k < g.offsets[i + 1]; ++k) directed.insert({i, g.neighbors[k]});
    }
    for (auto [i, j] : directed) EXPECT_TRUE(directed.count({j, i}));
    EXPECT_EQ(directed.size(), 2 * g.edges.size());
  }
  // 8-connectivity adds two diagonals per interior cell.
  EXPECT_EQ(build_grid_graph(4, 5, 8).edges.size(), static_cast<std::size_t>(4 * 4 + 5 * 3 + 2 * 3 * 4));
}

TEST(GridGraph, InvalidArguments) {
  EXPECT_THROW(build_grid_graph(3, 3, 6), std::invalid_argument);
  EXPECT_THROW(build_grid_graph(0, 3, 4), std::invalid_argument);
}

TEST(Downsample, Examples) {
  const Tensor f = random_tensor({2, 3, 8, 12}, 1);
  EXPECT_EQ(max_abs_diff(downsample_avg(f, 0).values(), f.values()), 0.0);
  const Tensor d = downsample_avg(f, 2);
  EXPECT_EQ(d.shape(), (std::vector<int>{2, 3, 2, 3}));
  EXPECT_EQ(flatten_to_nodes(d).dim(1), 8 * 12 / 16);
  const Tensor c({1, 2, 4, 4}, 0.375);
  const Tensor dc = downsample_avg(c, 1);
  for (double v : dc.values()) EXPECT_EQ(v, 0.375);
  EXPECT_THROW(downsample_avg(random_tensor({1, 1, 6, 8}, 2), 2), std::invalid_argument);
}

TEST(Downsample, BlockMeanAndGlobalMean) {
  const Tensor f = random_tensor({1, 2, 8, 8}, 3);
  const Tensor d = downsample_avg(f, 1);
  EXPECT_NEAR(d.at(0, 1, 2, 3), (f.at(0, 1, 4, 6) + f.at(0, 1, 4, 7) + f.at(0, 1, 5, 6) + f.at(0, 1, 5, 7)) / 4, 1e-15);
  double a = 0, b = 0;
  for (double v : f.values()) a += v;
  const Tensor global = downsample_avg(f, 3);
  for (double v : global.values()) b += v;
  EXPECT_NEAR(a / f.size(), b / 2, 1e-12);
}

TEST(Flatten, LayoutAndRoundTrip) {
  const Tensor f = random_tensor({1, 3, 2, 2}, 4);
  const Tensor n = flatten_to_nodes(f);
  EXPECT_EQ(n.shape(), (std::vector<int>{1, 4, 3}));
  for (int c = 0; c < 3; ++c) EXPECT_EQ(n[c], f.at(0, c, 0, 0));
  EXPECT_EQ(n[3 * 3 + 2], f.at(0, 2, 1, 1));
  const Tensor back = unflatten_nodes(n, 2, 2);
  EXPECT_EQ(back.storage(), f.storage());
}

TEST(Upsample, Examples) {
  const Tensor f = random_tensor({1, 2, 3, 4}, 5);
  EXPECT_EQ(upsample_bilinear(f, 3, 4).storage(), f.storage());
  const Tensor c({1, 1, 2, 3}, -0.7);
  const Tensor up = upsample_bilinear(c, 7, 9);
  for (double v : up.values()) EXPECT_NEAR(v, -0.7, 1e-15);
  const Tensor ramp({1, 1, 1, 2}, std::vector<double>{0.0, 1.0});
  const Tensor half = upsample_bilinear(ramp, 1, 3);
  EXPECT_EQ(half.storage(), (std::vector<double>{0.0, 0.5, 1.0}));
}

TEST(Upsample, BackwardIsAdjoint) {
  const Tensor x = random_tensor({1, 2, 3, 4}, 6);
  const Tensor g = random_tensor({1, 2, 7, 9}, 7);
  const Tensor y = upsample_bilinear(x, 7, 9);
  const Tensor gx = upsample_bilinear_backward(g, 3, 4);
  double lhs = 0, rhs = 0;
  for (std::size_t i = 0; i < y.size(); ++i) lhs += y[i] * g[i];
  for (std::size_t i = 0; i < x.size(); ++i) rhs += x[i] * gx[i];
  EXPECT_NEAR(lhs, rhs, 1e-12);
}

TEST(Aggregate, Examples) {
  const GridGraph single = build_grid_graph(1, 1, 4);
  const Tensor x({1, 1, 3}, std::vector<double>{1, 2, 3});
  EXPECT_EQ(aggregate_neighbors(x, single, true).storage(), x.storage());
  const GridGraph pair = build_grid_graph(1, 2, 4);
  const Tensor ab({1, 2, 1}, std::vector<double>{2.0, 5.0});
  EXPECT_EQ(aggregate_neighbors(ab, pair, true).storage(), (std::vector<double>{3.5, 3.5}));
  const GridGraph g = build_grid_graph(3, 3, 4);
  Tensor onehot({1, 9, 1});
  onehot[4] = 1.0;
  const Tensor out = aggregate_neighbors(onehot, g, true);
  EXPECT_DOUBLE_EQ(out[4], 1.0 / 5.0);
  for (int n : {1, 3, 5, 7}) EXPECT_DOUBLE_EQ(out[n], 1.0 / 4.0);  // edge midpoints have degree 3
  for (int n : {0, 2, 6, 8}) EXPECT_EQ(out[n], 0.0);
}

TEST(Aggregate, MatchesDenseProductOnSmallGrids) {
  for (int h = 1; h <= 5; ++h) {
    for (int w = 1; w <= 5; ++w) {
      for (int conn : {4, 8}) {
        for (bool norm : {false, true}) {
          const GridGraph g = build_grid_graph(h, w, conn);
          const int n = h * w, d = 3;
          std::vector<double> a(static_cast<std::size_t>(n) * n, 0.0);
          for (int i = 0; i < n; ++i) a[i * n + i] = 1.0;
          for (auto [i, j] : g.edges) a[i * n + j] = a[j * n + i] = 1.0;
          const Tensor x = random_tensor({2, n, d}, 100 + h * 10 + w);
          const Tensor y = aggregate_neighbors(x, g, norm);
          for (int b = 0; b < 2; ++b) {
            for (int i = 0; i < n; ++i) {
              double row = 0.0;
              for (int j = 0; j < n; ++j) row += a[i * n + j];
              for (int k = 0; k < d; ++k) {
                double s = 0.0;
                for (int j = 0; j < n; ++j) s += a[i * n + j] * x[(b * n + j) * d + k];
                if (norm) s /= row;
                EXPECT_NEAR(y[(b * n + i) * d + k], s, 1e-12);
              }
            }
          }
        }
      }
    }
  }
}

TEST(Aggregate, ShapeMismatchThrows) {
  const GridGraph g = build_grid_graph(2, 2, 4);
  EXPECT_THROW(aggregate_neighbors(Tensor({1, 5, 2}), g, true), std::invalid_argument);
}

TEST(Aggregate, BackwardIsAdjoint) {
  const GridGraph g = build_grid_graph(4, 3, 8);
  const Tensor x = random_tensor({1, 12, 2}, 8), gy = random_tensor({1, 12, 2}, 9);
  for (bool norm : {false, true}) {
    const Tensor y = aggregate_neighbors(x, g, norm);
    const Tensor gx = aggregate_neighbors_backward(gy, g, norm);
    double lhs = 0, rhs = 0;
    for (std::size_t i = 0; i < y.size(); ++i) lhs += y[i] * gy[i];
    for (std::size_t i = 0; i < x.size(); ++i) rhs += x[i] * gx[i];
    EXPECT_NEAR(lhs, rhs, 1e-12);
  }
}

}  // namespace
