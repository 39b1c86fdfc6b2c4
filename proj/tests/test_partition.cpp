#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "patchflow/partition/hierarchy.hpp"
#include "test_support.hpp"

namespace patchflow {
namespace {

using Edge = std::tuple<std::uint32_t, std::uint32_t, double>;

AdjacencyGraph chain_graph(std::size_t n) {
  std::vector<Edge> e;
  for (std::size_t i = 0; i + 1 < n; ++i) e.emplace_back(i, i + 1, 1.0);
  return AdjacencyGraph::from_edges(n, e);
}

std::set<std::pair<std::size_t, std::size_t>> brute_knn_edges(const std::vector<Point3>& pts, std::size_t k) {
  std::set<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    std::vector<std::pair<double, std::size_t>> d;
    for (std::size_t j = 0; j < pts.size(); ++j)
      if (j != i) d.emplace_back((pts[i] - pts[j]).squaredNorm(), j);
    std::sort(d.begin(), d.end());
    for (std::size_t a = 0; a < std::min(k, d.size()); ++a)
      edges.emplace(std::min(i, d[a].second), std::max(i, d[a].second));
  }
  return edges;
}

TEST(AdjacencyGraph, TwoPointsGiveOneEdge) {
  const std::vector<Point3> pts{{0, 0, 0}, {1, 0, 0}};
  const AdjacencyGraph g = build_adjacency_graph(pts, 3);
  EXPECT_EQ(g.edge_count(), 1u);
  EXPECT_TRUE(g.has_edge(0, 1));
  EXPECT_TRUE(g.has_edge(1, 0));
  EXPECT_DOUBLE_EQ(g.mean_edge_length, 1.0);
  EXPECT_DOUBLE_EQ(g.adjacent_weights(0)[0], 0.5);
}

TEST(AdjacencyGraph, GridDegreeAtLeastK) {
  const auto pts = testing::grid_points(15, 12, 0.5);
  for (std::size_t k : {3u, 6u, 10u}) {
    const AdjacencyGraph g = build_adjacency_graph(pts, k);
    for (std::size_t v = 0; v < g.node_count(); ++v) EXPECT_GE(g.degree(v), k);
  }
}

TEST(AdjacencyGraph, SymmetricAndMatchesLinearScan) {
  std::mt19937_64 rng(11);
  const auto pts = testing::random_points(400, rng, 0.0, 10.0);
  const AdjacencyGraph g = build_adjacency_graph(pts, 8);
  const auto oracle = brute_knn_edges(pts, 8);
  EXPECT_EQ(g.edge_count(), oracle.size());
  double len = 0.0;
  for (const auto& [a, b] : oracle) {
    EXPECT_TRUE(g.has_edge(a, b));
    EXPECT_TRUE(g.has_edge(b, a));
    len += (pts[a] - pts[b]).norm();
  }
  const double mean = len / static_cast<double>(oracle.size());
  EXPECT_NEAR(g.mean_edge_length, mean, 1e-12);
  for (std::size_t v = 0; v < g.node_count(); ++v) {
    const auto adj = g.adjacent(v);
    const auto w = g.adjacent_weights(v);
    for (std::size_t a = 0; a < adj.size(); ++a)
      EXPECT_NEAR(w[a], 1.0 / (1.0 + (pts[v] - pts[adj[a]]).norm() / mean), 1e-12);
  }
  EXPECT_THROW(build_adjacency_graph(pts, 2), InvalidParams);
}

// Routes a general s-t network through the terminal-link interface.
MaxFlow network(std::uint32_t n, std::uint32_t s, std::uint32_t t,
                const std::vector<std::tuple<std::uint32_t, std::uint32_t, double>>& arcs, double& direct) {
  MaxFlow f(n);
  direct = 0.0;
  for (const auto& [a, b, c] : arcs) {
    if (a == s && b == t)
      direct += c;
    else if (a == s && b != s)
      f.add_terminal(b, c, 0.0);
    else if (b == t && a != t)
      f.add_terminal(a, 0.0, c);
    else if (a != t && b != s)
      f.add_edge(a, b, c);
  }
  return f;
}

TEST(MaxFlow, TextbookNetwork) {
  const std::vector<std::tuple<std::uint32_t, std::uint32_t, double>> arcs{
      {0, 1, 16}, {0, 2, 13}, {1, 3, 12}, {2, 1, 4}, {2, 4, 14}, {3, 2, 9}, {3, 5, 20}, {4, 3, 7}, {4, 5, 4}};
  double direct = 0.0;
  MaxFlow f = network(6, 0, 5, arcs, direct);
  EXPECT_NEAR(f.solve() + direct, 23.0, 1e-12);
  const auto side = f.source_side();
  EXPECT_TRUE(side[1]);
  EXPECT_TRUE(side[2]);
  EXPECT_TRUE(side[4]);
  EXPECT_FALSE(side[3]);
}

TEST(MaxFlow, EqualsExhaustiveMinCut) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  std::bernoulli_distribution keep(0.45);
  for (int trial = 0; trial < 200; ++trial) {
    const std::uint32_t n = 10, s = 0, t = n - 1;
    std::vector<std::tuple<std::uint32_t, std::uint32_t, double>> arcs;
    for (std::uint32_t a = 0; a < n; ++a)
      for (std::uint32_t b = 0; b < n; ++b)
        if (a != b && keep(rng)) arcs.emplace_back(a, b, u(rng));
    double direct = 0.0;
    MaxFlow f = network(n, s, t, arcs, direct);
    const double flow = f.solve() + direct;
    double best = std::numeric_limits<double>::infinity();
    for (std::uint32_t mask = 0; mask < (1u << (n - 2)); ++mask) {
      auto in_s = [&](std::uint32_t v) { return v == s || (v != t && ((mask >> (v - 1)) & 1u)); };
      double cut = 0.0;
      for (const auto& [a, b, c] : arcs)
        if (in_s(a) && !in_s(b)) cut += c;
      best = std::min(best, cut);
    }
    EXPECT_NEAR(flow, best, 1e-9) << "trial " << trial;
    auto side = f.source_side();
    side[s] = 1;
    side[t] = 0;
    double side_cut = 0.0;
    for (const auto& [a, b, c] : arcs)
      if (side[a] && !side[b]) side_cut += c;
    EXPECT_NEAR(side_cut, best, 1e-9) << "trial " << trial;
  }
}

TEST(MaxFlow, LargeGridAgainstCutValue) {
  // 2D grid with random unaries: the reported flow equals the energy of the
  // returned cut, which certifies optimality.
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const std::uint32_t w = 120, h = 90;
  MaxFlow f(w * h);
  std::vector<double> unary(w * h);
  for (auto& x : unary) x = u(rng);
  for (std::uint32_t v = 0; v < w * h; ++v) f.add_terminal(v, std::max(unary[v], 0.0), std::max(-unary[v], 0.0));
  for (std::uint32_t y = 0; y < h; ++y)
    for (std::uint32_t x = 0; x < w; ++x) {
      if (x + 1 < w) f.add_edge(y * w + x, y * w + x + 1, 0.4, 0.4);
      if (y + 1 < h) f.add_edge(y * w + x, (y + 1) * w + x, 0.4, 0.4);
    }
  const double flow = f.solve();
  const auto side = f.source_side();
  double cut = 0.0;
  for (std::uint32_t v = 0; v < w * h; ++v) cut += side[v] ? std::max(-unary[v], 0.0) : std::max(unary[v], 0.0);
  for (std::uint32_t y = 0; y < h; ++y)
    for (std::uint32_t x = 0; x < w; ++x) {
      if (x + 1 < w && side[y * w + x] != side[y * w + x + 1]) cut += 0.4;
      if (y + 1 < h && side[y * w + x] != side[(y + 1) * w + x]) cut += 0.4;
    }
  EXPECT_NEAR(flow, cut, 1e-8);
}

struct ChainOptimum {
  double energy;
  std::vector<std::uint32_t> labels;
};

// Every partition of a chain into contiguous segments, one per subset of
// the n-1 edges.
ChainOptimum brute_force_chain(const FeatureMatrix& f, double lambda) {
  const std::size_t n = static_cast<std::size_t>(f.rows());
  ChainOptimum best{std::numeric_limits<double>::infinity(), {}};
  for (std::uint32_t mask = 0; mask < (1u << (n - 1)); ++mask) {
    std::vector<std::uint32_t> lab(n, 0);
    for (std::size_t i = 1; i < n; ++i) lab[i] = lab[i - 1] + ((mask >> (i - 1)) & 1u);
    double e = lambda * std::popcount(mask);
    std::size_t start = 0;
    for (std::size_t i = 1; i <= n; ++i) {
      if (i < n && lab[i] == lab[start]) continue;
      const auto len = static_cast<Eigen::Index>(i - start);
      const Eigen::RowVectorXd mean = f.middleRows(static_cast<Eigen::Index>(start), len).colwise().mean();
      for (std::size_t j = start; j < i; ++j) e += (f.row(static_cast<Eigen::Index>(j)) - mean).squaredNorm();
      start = i;
    }
    if (e < best.energy) best = {e, lab};
  }
  return best;
}

double trivial_energy(const FeatureMatrix& f) {
  return (f.rowwise() - f.colwise().mean()).squaredNorm();
}

double singleton_energy(const AdjacencyGraph& g, double lambda) {
  double e = 0.0;
  for (double w : g.weights) e += w;
  return lambda * e / 2.0;
}

TEST(CutPursuit, StaircaseMatchesExhaustiveOptimum) {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> noise(0.0, 0.05);
  for (std::size_t n : {6u, 9u, 12u}) {
    for (int trial = 0; trial < 5; ++trial) {
      FeatureMatrix f(static_cast<Eigen::Index>(n), 2);
      const std::size_t step = n / 3;
      for (std::size_t i = 0; i < n; ++i) {
        const double level = static_cast<double>(std::min<std::size_t>(i / step, 2));
        f(static_cast<Eigen::Index>(i), 0) = level + noise(rng);
        f(static_cast<Eigen::Index>(i), 1) = -0.5 * level + noise(rng);
      }
      const double lambda = 0.1;
      const ChainOptimum opt = brute_force_chain(f, lambda);
      CutPursuitParams p;
      p.lambda = lambda;
      const CutPursuitResult r = l0_cut_pursuit(f, chain_graph(n), p);
      EXPECT_NEAR(r.energy, opt.energy, 1e-9) << "n=" << n << " trial " << trial;
      EXPECT_EQ(r.component, opt.labels);
      EXPECT_EQ(r.component_count(), 3u);
    }
  }
}

TEST(CutPursuit, RandomChainsBoundedByOptimumAndTrivialPartitions) {
  std::mt19937_64 rng(14);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 4 + static_cast<std::size_t>(trial % 9);
    FeatureMatrix f(static_cast<Eigen::Index>(n), 3);
    for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = g(rng);
    const double lambda = std::pow(10.0, -2.0 + 0.1 * trial);
    const AdjacencyGraph graph = chain_graph(n);
    CutPursuitParams p;
    p.lambda = lambda;
    const CutPursuitResult r = l0_cut_pursuit(f, graph, p);
    const ChainOptimum opt = brute_force_chain(f, lambda);
    EXPECT_GE(r.energy, opt.energy - 1e-9);
    EXPECT_LE(r.energy, trivial_energy(f) + 1e-9);
    EXPECT_LE(r.energy, singleton_energy(graph, lambda) + 1e-9);
    EXPECT_NEAR(r.energy, partition_energy(f, graph, r.component, lambda), 1e-9);
  }
}

TEST(CutPursuit, EnergyBelowTrivialPartitionsOnKnnGraphs) {
  std::mt19937_64 rng(15);
  std::normal_distribution<double> g(0.0, 1.0);
  const auto pts = testing::random_points(600, rng, 0.0, 10.0);
  const AdjacencyGraph graph = build_adjacency_graph(pts, 8);
  FeatureMatrix f(600, 3);
  for (Eigen::Index i = 0; i < 600; ++i) {
    const Point3& x = pts[static_cast<std::size_t>(i)];
    f(i, 0) = x.x() > 5 ? 1.0 : 0.0;
    f(i, 1) = std::floor(x.y() / 3.0);
    f(i, 2) = 0.3 * g(rng);
  }
  for (double lambda : {0.01, 0.1, 1.0, 10.0, 100.0}) {
    CutPursuitParams p;
    p.lambda = lambda;
    const CutPursuitResult r = l0_cut_pursuit(f, graph, p);
    EXPECT_LE(r.energy, trivial_energy(f) + 1e-9) << lambda;
    EXPECT_LE(r.energy, singleton_energy(graph, lambda) + 1e-9) << lambda;
    // Components are connected in the graph.
    std::vector<std::vector<std::uint32_t>> members(r.component_count());
    for (std::uint32_t v = 0; v < 600; ++v) members[r.component[v]].push_back(v);
    for (const auto& m : members) {
      std::set<std::uint32_t> seen{m.front()};
      std::vector<std::uint32_t> stack{m.front()};
      while (!stack.empty()) {
        const auto v = stack.back();
        stack.pop_back();
        for (auto w : graph.adjacent(v))
          if (r.component[w] == r.component[v] && seen.insert(w).second) stack.push_back(w);
      }
      EXPECT_EQ(seen.size(), m.size());
    }
  }
}

TEST(CutPursuit, DisconnectedGraphSplitsIntoParts) {
  std::vector<Edge> e{{0, 1, 1.0}, {1, 2, 1.0}, {3, 4, 1.0}};
  const AdjacencyGraph graph = AdjacencyGraph::from_edges(5, e);
  const FeatureMatrix f = FeatureMatrix::Zero(5, 2);
  const CutPursuitResult r = l0_cut_pursuit(f, graph, {});
  EXPECT_EQ(r.component, (std::vector<std::uint32_t>{0, 0, 0, 1, 1}));
  EXPECT_DOUBLE_EQ(r.energy, 0.0);
}

// Two touching 10x10 grids whose points carry distinct constant features.
struct TwoBlocks {
  std::vector<Point3> pts;
  FeatureMatrix f;
};

TwoBlocks two_blocks() {
  TwoBlocks b;
  b.pts = testing::grid_points(20, 10, 1.0);
  b.f.resize(200, 3);
  for (Eigen::Index i = 0; i < 200; ++i) {
    const bool left = b.pts[static_cast<std::size_t>(i)].x() < 10.0;
    b.f.row(i) << (left ? 1.0 : 0.0), (left ? 0.0 : 1.0), 0.0;
  }
  return b;
}

TEST(HierarchicalPartition, TwoClustersAtEveryLevel) {
  const TwoBlocks b = two_blocks();
  const AdjacencyGraph g = build_adjacency_graph(b.pts, 10);
  for (double scale : {0.05, 0.3, 1.0}) {
    const auto part = hierarchical_partition(b.pts, b.f, g, {0.1 * scale, 0.5 * scale, 2.0 * scale});
    for (int l = 1; l <= 3; ++l) {
      ASSERT_EQ(part.level(l).size(), 2u) << "level " << l;
      for (const Patch& p : part.level(l)) {
        EXPECT_EQ(p.point_indices.size(), 100u);
        EXPECT_EQ(p.level, l);
        const bool left = b.pts[p.point_indices.front()].x() < 10.0;
        for (PointIndex i : p.point_indices) EXPECT_EQ(b.pts[i].x() < 10.0, left);
        EXPECT_NEAR(p.centroid.x(), left ? 4.5 : 14.5, 1e-12);
      }
    }
    EXPECT_FALSE(part.degenerate_features);
  }
}

TEST(HierarchicalPartition, UniformFeaturesGiveOnePatch) {
  const auto pts = testing::grid_points(12, 12, 1.0);
  const FeatureMatrix f = FeatureMatrix::Constant(144, 3, 0.25);
  const auto part = hierarchical_partition(pts, f, build_adjacency_graph(pts, 8), {0.1, 0.5, 2.0});
  EXPECT_TRUE(part.degenerate_features);
  for (int l = 1; l <= 3; ++l) {
    ASSERT_EQ(part.level(l).size(), 1u);
    EXPECT_EQ(part.level(l)[0].point_indices.size(), 144u);
  }
}

TEST(HierarchicalPartition, RejectsNonIncreasingLambdas) {
  const TwoBlocks b = two_blocks();
  const AdjacencyGraph g = build_adjacency_graph(b.pts, 10);
  EXPECT_THROW(hierarchical_partition(b.pts, b.f, g, {0.5, 0.5, 2.0}), InvalidParams);
  EXPECT_THROW(hierarchical_partition(b.pts, b.f, g, {0.1, 2.0, 0.5}), InvalidParams);
}

TEST(FilterSmallPatches, Threshold) {
  HierarchicalPartition part;
  Patch nine, ten;
  for (PointIndex i = 0; i < 9; ++i) nine.point_indices.push_back(i);
  for (PointIndex i = 9; i < 19; ++i) ten.point_indices.push_back(i);
  nine.patch_id = 0;
  ten.patch_id = 1;
  part.level(1) = {nine, ten};
  part.level(2) = {nine};
  const auto out = filter_small_patches(part, 10);
  ASSERT_EQ(out.level(1).size(), 1u);
  EXPECT_EQ(out.level(1)[0].patch_id, 1);
  EXPECT_TRUE(out.level(2).empty());
  EXPECT_TRUE(out.level(3).empty());
  const auto labels = out.labels(1, 19);
  EXPECT_EQ(labels[0], -1);
  EXPECT_EQ(labels[18], 1);
}

// Rolling terrain with a few raised blocks and ridges.
std::vector<Point3> bumpy_scene(std::size_t side) {
  std::vector<Point3> pts;
  for (std::size_t j = 0; j < side; ++j)
    for (std::size_t i = 0; i < side; ++i) {
      const double x = 0.5 * static_cast<double>(i) + 0.11 * std::sin(1.7 * static_cast<double>(j));
      const double y = 0.5 * static_cast<double>(j) + 0.13 * std::cos(2.3 * static_cast<double>(i));
      double z = 0.4 * std::sin(0.3 * x) * std::cos(0.2 * y);
      if (std::hypot(x - 8, y - 8) < 3) z += std::sqrt(9 - std::pow(std::hypot(x - 8, y - 8), 2));
      if (std::abs(x - y - 5) < 0.8) z += 1.5;
      if (x > 20 && x < 24 && y > 4 && y < 12) z += 2.0;
      pts.emplace_back(x, y, z);
    }
  return pts;
}

TEST(PartitionTile, CoarsensWithLevel) {
  const auto pts = bumpy_scene(60);
  const auto part = partition_tile(pts);
  EXPECT_GT(part.level(1).size(), 0u);
  EXPECT_LE(part.component_counts[2], part.component_counts[1]);
  EXPECT_LE(part.component_counts[1], part.component_counts[0]);
  for (int l = 1; l <= 3; ++l) {
    std::vector<int> hits(pts.size(), 0);
    for (const Patch& p : part.level(l)) {
      EXPECT_GE(p.point_indices.size(), 10u);
      for (PointIndex i : p.point_indices) ++hits[i];
    }
    for (int h : hits) EXPECT_LE(h, 1);
  }
  EXPECT_LT(part.regularization[0], part.regularization[1]);
  EXPECT_LT(part.regularization[1], part.regularization[2]);
}

TEST(PartitionTile, RigidMotionInvariance) {
  const auto pts = bumpy_scene(40);
  std::mt19937_64 rng(16);
  const RigidTransform t = testing::random_rigid(rng, 50.0);
  std::vector<Point3> moved;
  for (const auto& p : pts) moved.push_back(t(p));
  const auto a = partition_tile(pts);
  const auto b = partition_tile(moved);
  for (int l = 1; l <= 3; ++l) EXPECT_EQ(a.labels(l, pts.size()), b.labels(l, pts.size())) << "level " << l;
}

TEST(PartitionTile, GrayChannelSeparatesFlatRegions) {
  const auto pts = testing::grid_points(30, 30, 1.0);
  std::vector<double> gray(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) gray[i] = pts[i].x() < 15 ? 40.0 : 200.0;
  const auto part = partition_tile(pts, gray);
  const auto labels = part.labels(3, pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = i + 1; j < pts.size(); ++j)
      if ((pts[i].x() < 15) != (pts[j].x() < 15) && labels[i] >= 0) EXPECT_NE(labels[i], labels[j]);
}

TEST(PatchLabels, DumpRows) {
  testing::TempDir dir("labels");
  const TwoBlocks b = two_blocks();
  const auto part = hierarchical_partition(b.pts, b.f, build_adjacency_graph(b.pts, 10), {0.1, 0.5, 2.0});
  std::vector<PointIndex> map(200);
  for (std::size_t i = 0; i < 200; ++i) map[i] = 1000 + i;
  io::write_patch_labels(dir.file("labels.csv"), part, map);
  const io::CsvTable t = io::CsvTable::read(dir.file("labels.csv"));
  EXPECT_EQ(t.rows().size(), 600u);
  EXPECT_GE(t.integer(t.rows()[0], t.column("point_index"), "point_index"), 1000);
}

}  // namespace
}  // namespace patchflow
