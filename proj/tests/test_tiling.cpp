#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "patchflow/tiling.hpp"
#include "test_support.hpp"

namespace patchflow {
namespace {

PointCloud box_cloud(std::size_t n, const Vec3& ext, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) c.points.emplace_back(u(rng) * ext.x(), u(rng) * ext.y(), u(rng) * ext.z());
  return c;
}

PointCloud corners(const Vec3& ext) {
  PointCloud c;
  for (int i = 0; i < 8; ++i) c.points.emplace_back((i & 1) * ext.x(), ((i >> 1) & 1) * ext.y(), ((i >> 2) & 1) * ext.z());
  return c;
}

TEST(ProjectionAxis, FlatTerrainDropsZ) {
  const PointCloud p = corners({100, 100, 5});
  EXPECT_EQ(select_projection_axis(p, p), Axis::kZ);
}

TEST(ProjectionAxis, VerticalWallDropsX) {
  const PointCloud p = corners({5, 100, 100});
  EXPECT_EQ(select_projection_axis(p, p), Axis::kX);
}

TEST(ProjectionAxis, CubeTiePrefersZ) {
  const PointCloud p = corners({7, 7, 7});
  EXPECT_EQ(select_projection_axis(p, p), Axis::kZ);
}

TEST(ProjectionAxis, TieBetweenXAndYPrefersY) {
  const PointCloud p = corners({10, 1, 10});
  EXPECT_EQ(select_projection_axis(p, p), Axis::kY);
  const PointCloud q = corners({1, 10, 10});
  EXPECT_EQ(select_projection_axis(q, q), Axis::kX);
}

TEST(ProjectionAxis, UsesUnionOfBothClouds) {
  PointCloud p = corners({100, 5, 1});
  PointCloud q = corners({1, 5, 100});
  // union extent 100 x 5 x 100 -> dropping Y keeps 100*100
  EXPECT_EQ(select_projection_axis(p, q), Axis::kY);
}

TEST(TilePair, SmallCloudGivesSingleTile) {
  const PointCloud p = box_cloud(500, {50, 50, 2}, 1);
  const auto tiles = tile_pair(p, p, 1000, 10.0);
  ASSERT_EQ(tiles.size(), 1u);
  EXPECT_EQ(tiles[0].source.point_indices.size(), 500u);
  EXPECT_EQ(tiles[0].target.point_indices.size(), 500u);
  EXPECT_EQ(tiles[0].pair_id, 0);
}

TEST(TilePair, SplitsAlongLongEdge) {
  const PointCloud p = box_cloud(2000, {2, 1, 0.1}, 2);
  const auto tiles = tile_pair(p, p, 1001, 0.0);
  ASSERT_EQ(tiles.size(), 2u);
  // The cut runs perpendicular to x: both cells share the full y range.
  for (const auto& t : tiles) {
    EXPECT_LT(t.source.point_indices.size(), 1001u);
    EXPECT_EQ(t.source.bounds2d.lo.y(), tiles[0].source.bounds2d.lo.y());
    EXPECT_EQ(t.source.bounds2d.hi.y(), tiles[0].source.bounds2d.hi.y());
  }
  EXPECT_EQ(tiles[0].source.bounds2d.hi.x(), tiles[1].source.bounds2d.lo.x());
  const double cut = tiles[0].source.bounds2d.hi.x();
  std::size_t left = 0;
  for (const auto& x : p.points) left += x.x() < cut;
  EXPECT_EQ(left, tiles[0].source.point_indices.size());
  EXPECT_LT(left, 1001u);
  EXPECT_LT(p.size() - left, 1001u);
}

TEST(TilePair, MarginThreshold) {
  PointCloud p;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 1500; ++i) p.points.emplace_back(100.0 * u(rng), 40.0 * u(rng), 0.0);
  const auto probe = tile_pair(p, p, 1000, 10.0);
  ASSERT_EQ(probe.size(), 2u);
  const double cut = probe[0].source.bounds2d.hi.x();

  PointCloud q = p;
  q.points.emplace_back(cut + 5.0, 20.0, 0.0);
  q.points.emplace_back(cut + 15.0, 20.0, 0.0);
  const std::size_t i5 = q.size() - 2, i15 = q.size() - 1;
  const auto tiles = tile_pair(p, q, 1000, 10.0);
  ASSERT_EQ(tiles.size(), 2u);
  ASSERT_EQ(tiles[0].source.bounds2d.hi.x(), cut);
  const auto& left = tiles[0].target.point_indices;
  EXPECT_NE(std::find(left.begin(), left.end(), i5), left.end());
  EXPECT_EQ(std::find(left.begin(), left.end(), i15), left.end());
  const auto& right = tiles[1].target.point_indices;
  EXPECT_NE(std::find(right.begin(), right.end(), i5), right.end());
  EXPECT_NE(std::find(right.begin(), right.end(), i15), right.end());
}

TEST(TilePair, PartitionAndDilationProperties) {
  const PointCloud p = box_cloud(20000, {300, 120, 10}, 4);
  const PointCloud q = box_cloud(18000, {310, 125, 10}, 5);
  std::vector<std::size_t> prev_counts;
  for (double margin : {0.0, 2.0, 10.0, 40.0}) {
    const auto tiles = tile_pair(p, q, 2500, margin);
    std::vector<int> hits(p.size(), 0);
    std::size_t total = 0;
    for (const auto& t : tiles) {
      EXPECT_EQ(t.source.bounds2d, t.target.bounds2d);
      EXPECT_LT(t.source.point_indices.size(), 2500u);
      total += t.source.point_indices.size();
      for (PointIndex i : t.source.point_indices) {
        ++hits[i];
        EXPECT_TRUE(t.source.bounds2d.contains_dilated(project2d(p.points[i], t.source.projection_axis), 0.0));
      }
      for (PointIndex i : t.target.point_indices)
        EXPECT_TRUE(t.target.bounds2d.contains_dilated(project2d(q.points[i], t.target.projection_axis), margin));
    }
    EXPECT_EQ(total, p.size());
    EXPECT_TRUE(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
    std::vector<std::size_t> counts;
    for (const auto& t : tiles) counts.push_back(t.target.point_indices.size());
    if (!prev_counts.empty()) {
      ASSERT_EQ(counts.size(), prev_counts.size());
      for (std::size_t k = 0; k < counts.size(); ++k) EXPECT_GE(counts[k], prev_counts[k]);
    }
    prev_counts = counts;
  }
}

TEST(TilePair, Deterministic) {
  const PointCloud p = box_cloud(9000, {80, 60, 3}, 6);
  const auto a = tile_pair(p, p, 1000, 5.0);
  const auto b = tile_pair(p, p, 1000, 5.0);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].source.bounds2d, b[i].source.bounds2d);
    EXPECT_EQ(a[i].source.point_indices, b[i].source.point_indices);
    EXPECT_EQ(a[i].target.point_indices, b[i].target.point_indices);
  }
}

TEST(TilePair, CoincidentPointsStopSplitting) {
  PointCloud p;
  for (int i = 0; i < 1500; ++i) p.points.emplace_back(1.0, 2.0, 3.0);
  const auto tiles = tile_pair(p, p, 1000, 1.0);
  ASSERT_EQ(tiles.size(), 1u);
  EXPECT_EQ(tiles[0].source.point_indices.size(), 1500u);
}

TEST(TilePair, Errors) {
  PointCloud empty, one;
  one.points.emplace_back(0, 0, 0);
  EXPECT_THROW(tile_pair(empty, one, 1000, 1.0), DegenerateInput);
  EXPECT_THROW(tile_pair(one, empty, 1000, 1.0), DegenerateInput);
  EXPECT_THROW(tile_pair(one, one, 999, 1.0), InvalidParams);
  EXPECT_THROW(tile_pair(one, one, 1000, -1.0), InvalidParams);
}

TEST(TileMap, DumpHasOneRowPerPair) {
  testing::TempDir dir("tiles");
  const PointCloud p = box_cloud(3000, {40, 20, 1}, 7);
  const auto tiles = tile_pair(p, p, 1000, 2.0);
  io::write_tile_map(dir.file("tiles.csv"), tiles);
  const io::CsvTable t = io::CsvTable::read(dir.file("tiles.csv"));
  ASSERT_EQ(t.rows().size(), tiles.size());
  const std::size_t cs = t.column("source_points");
  for (std::size_t i = 0; i < tiles.size(); ++i)
    EXPECT_EQ(static_cast<std::size_t>(t.integer(t.rows()[i], cs, "source_points")),
              tiles[i].source.point_indices.size());
}

}  // namespace
}  // namespace patchflow
