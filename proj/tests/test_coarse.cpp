#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>
#include <set>

#include "patchflow/coarse/match2d.hpp"
#include "patchflow/coarse/match3d.hpp"
#include "patchflow/coarse/ncc.hpp"
#include "patchflow/geometry/kabsch.hpp"
#include "test_support.hpp"

namespace patchflow {
namespace {

std::vector<Point3> bumpy_surface(int n, double spacing, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> jitter(-0.2 * spacing, 0.2 * spacing);
  std::vector<Point3> pts;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const double x = i * spacing + jitter(rng), y = j * spacing + jitter(rng);
      pts.emplace_back(x, y, 0.8 * std::sin(0.9 * x) * std::cos(0.7 * y) + 0.1 * x);
    }
  return pts;
}

std::vector<PointIndex> all_indices(std::size_t n) {
  std::vector<PointIndex> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

Eigen::MatrixXd random_unit_rows(int n, int d, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Eigen::MatrixXd m(n, d);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < d; ++k) m(i, k) = g(rng);
    m.row(i).normalize();
  }
  return m;
}

std::set<std::pair<std::size_t, std::size_t>> brute_mutual(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  auto best = [](const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, Eigen::Index i) {
    Eigen::Index arg = 0;
    for (Eigen::Index j = 1; j < y.rows(); ++j)
      if (x.row(i).dot(y.row(j)) > x.row(i).dot(y.row(arg))) arg = j;
    return arg;
  };
  std::set<std::pair<std::size_t, std::size_t>> out;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const Eigen::Index j = best(a, b, i);
    if (best(b, a, j) == i) out.emplace(i, j);
  }
  return out;
}

PointFeatureSet feature_set(std::vector<PointIndex> idx, Eigen::MatrixXd desc) {
  PointFeatureSet s;
  s.point_indices = std::move(idx);
  s.descriptors = std::move(desc);
  s.provider_id = "test";
  s.rebuild_lookup();
  return s;
}

TEST(AdaptiveDownsample, SinglePointIsKept) {
  const std::vector<Point3> pts{{1, 2, 3}};
  EXPECT_EQ(adaptive_downsample(pts).indices, std::vector<PointIndex>{0});
}

TEST(AdaptiveDownsample, RegularGridKeepsOnePointPerVoxel) {
  const auto pts = testing::grid_points(10, 10, 1.0);
  const Downsampled d = adaptive_downsample(pts, 2.0);
  EXPECT_NEAR(d.voxel_size, 2.0, 1e-12);
  // Every 2x2 voxel holds four points equidistant from its centroid; the
  // lowest index, at even (i, j), represents it.
  std::vector<PointIndex> expected;
  for (int j = 0; j < 10; j += 2)
    for (int i = 0; i < 10; i += 2) expected.push_back(static_cast<PointIndex>(j * 10 + i));
  EXPECT_EQ(d.indices, expected);
}

TEST(AdaptiveDownsample, VoxelEdgeFollowsDensity) {
  const auto dense = testing::grid_points(20, 20, 0.5);
  const auto sparse = testing::grid_points(10, 10, 1.0);
  const double a = adaptive_downsample(dense).voxel_size;
  const double b = adaptive_downsample(sparse).voxel_size;
  EXPECT_NEAR(a, 2.0 * mean_scan_resolution(std::span<const Point3>(dense)), 1e-12);
  EXPECT_NEAR(b / a, 2.0, 1e-9);
}

TEST(Fpfh, DescriptorsAreUnitNorm) {
  std::mt19937_64 rng(1);
  const auto pts = bumpy_surface(30, 0.25, rng);
  const auto f = fpfh_features(pts, all_indices(pts.size()), 0.25);
  ASSERT_EQ(f.dim(), 33);
  EXPECT_EQ(f.provider_id, "builtin");
  for (Eigen::Index r = 0; r < f.descriptors.rows(); ++r) EXPECT_NEAR(f.descriptors.row(r).norm(), 1.0, 1e-6);
}

TEST(Fpfh, DuplicateGeometryGivesSameDescriptor) {
  std::mt19937_64 rng(2);
  const auto patch = bumpy_surface(24, 0.25, rng);
  std::vector<Point3> pts = patch;
  for (const Point3& p : patch) pts.push_back(p + Vec3(50.0, 0.0, 0.0));
  const auto f = fpfh_features(pts, all_indices(pts.size()), 0.25);
  const std::size_t n = patch.size();
  for (std::size_t i = 0; i < n; ++i)
    EXPECT_GT(f.descriptors.row(static_cast<Eigen::Index>(i)).dot(f.descriptors.row(static_cast<Eigen::Index>(n + i))),
              0.99);
}

TEST(Fpfh, RotatedCopyKeepsDescriptor) {
  std::mt19937_64 rng(3);
  const auto pts = bumpy_surface(24, 0.25, rng);
  const RigidTransform t = RigidTransform::from(rotation_about(Vec3::UnitZ(), 1.1), Vec3(3.0, -2.0, 0.5));
  const auto moved = apply_transform(t, pts);
  const auto a = fpfh_features(pts, all_indices(pts.size()), 0.25);
  const auto b = fpfh_features(moved, all_indices(pts.size()), 0.25);
  std::vector<double> dist;
  for (Eigen::Index r = 0; r < a.descriptors.rows(); ++r)
    dist.push_back(1.0 - a.descriptors.row(r).dot(b.descriptors.row(r)));
  std::sort(dist.begin(), dist.end());
  // Bin edges can flip single pair samples; the bulk must agree.
  EXPECT_LE(dist[dist.size() / 2], 0.05);
  EXPECT_LE(dist[dist.size() * 9 / 10], 0.05);
}

TEST(ImportedFeatures, ProviderAndSelection) {
  std::mt19937_64 rng(4);
  const auto imported = feature_set({0, 2, 4, 6}, random_unit_rows(4, 8, rng));
  const std::vector<PointIndex> at{2, 6};
  const auto s = select_imported_features(imported, at);
  EXPECT_EQ(s.provider_id, "import");
  EXPECT_TRUE(s.descriptors.row(0).isApprox(imported.descriptors.row(1)));
  EXPECT_TRUE(s.descriptors.row(1).isApprox(imported.descriptors.row(3)));
}

TEST(ImportedFeatures, MissingIndexThrows) {
  std::mt19937_64 rng(5);
  const auto imported = feature_set({0, 2}, random_unit_rows(2, 8, rng));
  const std::vector<PointIndex> at{0, 1};
  EXPECT_THROW(select_imported_features(imported, at), ImportKeyMismatch);
}

TEST(AggregatePatchFeature, SinglePointAndIdentical) {
  std::mt19937_64 rng(6);
  Eigen::MatrixXd d = random_unit_rows(3, 6, rng);
  d.row(2) = d.row(1);
  const auto feats = feature_set({10, 11, 12}, d);
  Patch single{1, 7, {10}, Point3::Zero()};
  EXPECT_TRUE(aggregate_patch_feature(single, feats).vector.isApprox(d.row(0).transpose(), 1e-12));
  Patch twins{1, 8, {11, 12}, Point3::Zero()};
  const PatchFeature pf = aggregate_patch_feature(twins, feats);
  EXPECT_EQ(pf.patch_id, 8);
  EXPECT_TRUE(pf.vector.isApprox(d.row(1).transpose(), 1e-12));
}

TEST(AggregatePatchFeature, MatchesDirectMean) {
  std::mt19937_64 rng(7);
  const Eigen::MatrixXd d = random_unit_rows(5, 16, rng);
  const auto feats = feature_set({0, 1, 2, 3, 4}, d);
  Patch p{2, 0, {0, 1, 2, 3, 4, 99}, Point3::Zero()};
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(16);
  for (int i = 0; i < 5; ++i) mean += d.row(i).transpose() / 5.0;
  mean /= mean.norm();
  const PatchFeature pf = aggregate_patch_feature(p, feats);
  EXPECT_LE((pf.vector - mean).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_NEAR(pf.vector.norm(), 1.0, 1e-6);
}

TEST(AggregatePatchFeature, WeightsScaleMembers) {
  std::mt19937_64 rng(8);
  const Eigen::MatrixXd d = random_unit_rows(2, 4, rng);
  const auto feats = feature_set({0, 1}, d);
  const std::unordered_map<PointIndex, double> w{{0, 1.0}};
  Patch p{1, 0, {0, 1}, Point3::Zero()};
  EXPECT_TRUE(aggregate_patch_feature(p, feats, &w).vector.isApprox(d.row(0).transpose(), 1e-12));
}

TEST(AggregatePatchFeature, EmptyPatchThrows) {
  std::mt19937_64 rng(9);
  const auto feats = feature_set({0}, random_unit_rows(1, 4, rng));
  Patch p{1, 3, {5, 6}, Point3::Zero()};
  EXPECT_THROW(aggregate_patch_feature(p, feats), EmptyPatchFeature);
}

TEST(MutualNearest, MatchesBruteForceOracle) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::MatrixXd a = random_unit_rows(20, 8, rng), b = random_unit_rows(20, 8, rng);
    const auto got = mutual_nearest(a, b);
    const std::set<std::pair<std::size_t, std::size_t>> gs(got.begin(), got.end());
    EXPECT_EQ(gs, brute_mutual(a, b));
  }
}

TEST(MutualNearest, LargeInputsCrossBlocks) {
  std::mt19937_64 rng(11);
  const Eigen::MatrixXd a = random_unit_rows(700, 6, rng), b = random_unit_rows(300, 6, rng);
  const auto got = mutual_nearest(a, b);
  const std::set<std::pair<std::size_t, std::size_t>> gs(got.begin(), got.end());
  EXPECT_EQ(gs, brute_mutual(a, b));
}

TEST(MutualNearest, RequiresMutuality) {
  // Source 0 prefers target 0, but target 0 prefers source 1.
  Eigen::MatrixXd a(2, 2), b(1, 2);
  a << std::cos(0.3), std::sin(0.3), 1.0, 0.0;
  b << 1.0, 0.0;
  const auto got = mutual_nearest(a, b);
  ASSERT_EQ(got.size(), 1u);
  EXPECT_EQ(got[0], std::make_pair(std::size_t{1}, std::size_t{0}));
}

TEST(MatchPatchFeatures, IdenticalListsGiveIdentity) {
  std::mt19937_64 rng(12);
  const Eigen::MatrixXd d = random_unit_rows(15, 10, rng);
  std::vector<PatchFeature> f;
  for (int i = 0; i < 15; ++i) f.push_back({i, 1, d.row(i).transpose()});
  const auto m = match_patch_features(f, f);
  ASSERT_EQ(m.size(), 15u);
  for (std::size_t i = 0; i < m.size(); ++i) EXPECT_EQ(m[i], std::make_pair(i, i));
}

TEST(MatchPatchFeatures, RoleSwapTransposes) {
  std::mt19937_64 rng(13);
  const Eigen::MatrixXd a = random_unit_rows(25, 5, rng), b = random_unit_rows(18, 5, rng);
  std::vector<PatchFeature> fa, fb;
  for (int i = 0; i < 25; ++i) fa.push_back({i, 1, a.row(i).transpose()});
  for (int i = 0; i < 18; ++i) fb.push_back({i, 1, b.row(i).transpose()});
  std::set<std::pair<std::size_t, std::size_t>> ab, ba;
  for (const auto& [i, j] : match_patch_features(fa, fb)) ab.emplace(i, j);
  for (const auto& [j, i] : match_patch_features(fb, fa)) ba.emplace(i, j);
  EXPECT_EQ(ab, ba);
}

TEST(MatchPatches3d, InjectiveWithSupportInsidePatches) {
  std::mt19937_64 rng(14);
  const int npatch = 6, per = 12;
  std::vector<Point3> src, tgt;
  std::vector<Patch> sp, tp;
  std::vector<PointIndex> idx;
  Eigen::MatrixXd d = random_unit_rows(npatch * per, 12, rng);
  for (int p = 0; p < npatch; ++p) {
    Patch a{1, p, {}, Point3::Zero()}, b{1, 100 + p, {}, Point3::Zero()};
    for (int k = 0; k < per; ++k) {
      const auto i = static_cast<PointIndex>(p * per + k);
      src.emplace_back(p, k, 0);
      tgt.emplace_back(p + 0.5, k, 0);
      a.point_indices.push_back(i);
      b.point_indices.push_back(i);
      idx.push_back(i);
    }
    sp.push_back(a);
    tp.push_back(b);
  }
  const auto fs = feature_set(idx, d), ft = feature_set(idx, d);
  const MatchSet m = match_patches_3d(1, sp, tp, src, tgt, fs, ft);
  EXPECT_TRUE(m.is_injective());
  ASSERT_EQ(m.size(), static_cast<std::size_t>(npatch));
  for (const PatchMatch& pm : m.matches) {
    EXPECT_EQ(pm.target_patch_id, pm.source_patch_id + 100);
    EXPECT_EQ(pm.modality, Modality::k3D);
    ASSERT_EQ(pm.support.size(), static_cast<std::size_t>(per));
    for (std::size_t i = 0; i < pm.support.size(); ++i) {
      EXPECT_EQ(pm.support.source_indices[i] / per, static_cast<std::size_t>(pm.source_patch_id));
      EXPECT_EQ(pm.support.source_indices[i], pm.support.target_indices[i]);
      EXPECT_NEAR(pm.support.confidence[i], 1.0, 1e-12);
    }
  }
}

TEST(MatchPatches3d, SupportCapThinsCandidates) {
  std::mt19937_64 rng(15);
  const int n = 100;
  std::vector<Point3> pts;
  std::vector<PointIndex> idx;
  Patch p{1, 0, {}, Point3::Zero()};
  for (int i = 0; i < n; ++i) {
    pts.emplace_back(i, 0, 0);
    p.point_indices.push_back(static_cast<PointIndex>(i));
    idx.push_back(static_cast<PointIndex>(i));
  }
  const auto f = feature_set(idx, random_unit_rows(n, 8, rng));
  Match3dOptions opts;
  opts.max_support_candidates = 10;
  const std::vector<Patch> ps{p};
  const MatchSet m = match_patches_3d(1, ps, ps, pts, pts, f, f, opts);
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m.matches[0].support.size(), 10u);
}

CameraModel nadir_camera(const std::string& id, double height, int w = 200, int h = 100) {
  CameraModel c;
  c.image_id = id;
  c.width = w;
  c.height = h;
  c.fx = c.fy = 100.0;
  c.cx = w / 2.0;
  c.cy = h / 2.0;
  // Looking down from (0, 0, height): camera x = world x, camera y = -world y.
  Eigen::Matrix3d r;
  r << 1, 0, 0, 0, -1, 0, 0, 0, -1;
  c.pose = RigidTransform::from(r, -(r * Vec3(0, 0, height)));
  return c;
}

TEST(ProjectToImage, OpticalAxisAndBehind) {
  const CameraModel c = nadir_camera("a", 10.0);
  const std::vector<Point3> pts{{0, 0, 0}, {0, 0, 20}};
  const auto pr = project_to_image(pts, c);
  EXPECT_TRUE(pr[0].valid);
  EXPECT_NEAR(pr[0].u, c.cx, 1e-12);
  EXPECT_NEAR(pr[0].v, c.cy, 1e-12);
  EXPECT_NEAR(pr[0].depth, 10.0, 1e-12);
  EXPECT_FALSE(pr[1].valid);
}

TEST(ProjectToImage, GridMatchesClosedForm) {
  CameraModel c = nadir_camera("a", 10.0, 400, 300);
  c.fx = 120.0;
  c.fy = 110.0;
  c.cx = 190.5;
  c.cy = 140.25;
  const auto grid = testing::grid_points(5, 4, 1.5, 2.0);
  const auto pr = project_to_image(grid, c);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double depth = 10.0 - grid[i].z();
    EXPECT_NEAR(pr[i].u, 120.0 * grid[i].x() / depth + 190.5, 1e-6);
    EXPECT_NEAR(pr[i].v, 110.0 * -grid[i].y() / depth + 140.25, 1e-6);
    EXPECT_TRUE(pr[i].valid);
  }
}

TEST(ProjectToImage, OutsideImageIsInvalid) {
  const CameraModel c = nadir_camera("a", 10.0, 200, 100);
  const std::vector<Point3> pts{{10.5, 0, 0}, {0, 5.5, 0}, {9.9, 4.9, 0}};
  const auto pr = project_to_image(pts, c);
  EXPECT_FALSE(pr[0].valid);
  EXPECT_FALSE(pr[1].valid);
  EXPECT_TRUE(pr[2].valid);
}

TEST(RemoveOccluded, HidesPointsBelowASurface) {
  const CameraModel c = nadir_camera("a", 10.0);
  const std::vector<Point3> pts{{0, 0, 5}, {0.001, 0, 0}, {3, 0, 0}};
  auto pr = project_to_image(pts, c);
  remove_occluded(pr, c, 4.0, 1.0);
  EXPECT_TRUE(pr[0].valid);
  EXPECT_FALSE(pr[1].valid);
  EXPECT_TRUE(pr[2].valid);
}

TEST(SelectTopKImages, RanksByVisibleCount) {
  std::vector<CameraModel> cams{nadir_camera("wide", 10.0, 200, 100), nadir_camera("narrow", 10.0, 20, 20),
                                nadir_camera("also_wide", 10.0, 200, 100)};
  const auto tile = testing::grid_points(10, 5, 0.5);
  std::vector<std::pair<std::size_t, std::string>> recount;
  for (const auto& c : cams) {
    std::size_t n = 0;
    for (const auto& p : project_to_image(tile, c)) n += p.valid;
    recount.emplace_back(n, c.image_id);
  }
  std::sort(recount.begin(), recount.end(),
            [](const auto& a, const auto& b) { return a.first != b.first ? a.first > b.first : a.second < b.second; });
  const auto top2 = select_top_k_images(tile, cams, 2);
  ASSERT_EQ(top2.size(), 2u);
  EXPECT_EQ(top2[0], recount[0].second);
  EXPECT_EQ(top2[1], recount[1].second);
  EXPECT_EQ(top2[0], "also_wide");
  EXPECT_EQ(select_top_k_images(tile, cams), std::vector<std::string>{"also_wide"});
}

TEST(SelectTopKImages, NothingVisibleThrows) {
  const std::vector<CameraModel> cams{nadir_camera("a", 10.0)};
  const std::vector<Point3> tile{{0, 0, 50}};
  EXPECT_THROW(select_top_k_images(tile, cams), NoVisibleImage);
}

Raster textured(int w, int h, int shift, std::uint64_t seed) {
  // Smooth random texture: sum of sinusoids, shifted by `shift` px along x.
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::array<double, 4>> waves;
  for (int k = 0; k < 12; ++k) waves.push_back({0.05 + 0.3 * u(rng), 0.05 + 0.3 * u(rng), 6.28 * u(rng), u(rng)});
  Raster r(w, h, 1, "img");
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double v = 0.0;
      for (const auto& wv : waves) v += wv[3] * std::sin(wv[0] * (x - shift) + wv[1] * y + wv[2]);
      r.at(x, y) = static_cast<std::uint8_t>(std::clamp(128.0 + 30.0 * v, 0.0, 255.0));
    }
  return r;
}

TEST(MatchPixels, IdenticalImagesMatchThemselves) {
  const Raster a = textured(160, 120, 0, 1);
  const PixelMatchSet m = match_pixels(a, a);
  ASSERT_FALSE(m.matches.empty());
  std::size_t grid = 0;
  for (int y = 7; y + 7 < 120; y += 8)
    for (int x = 7; x + 7 < 160; x += 8) ++grid;
  EXPECT_EQ(m.matches.size(), grid);
  for (const PixelMatch& p : m.matches) {
    EXPECT_NEAR(p.u2, p.u1, 1e-9);
    EXPECT_NEAR(p.v2, p.v1, 1e-9);
    EXPECT_NEAR(p.confidence, 1.0, 1e-9);
  }
}

TEST(MatchPixels, RecoversConstructedShift) {
  const Raster a = textured(200, 150, 0, 2);
  const Raster b = textured(200, 150, 3, 2);
  const PixelMatchSet m = match_pixels(a, b);
  ASSERT_GT(m.matches.size(), 100u);
  std::size_t good = 0, interior = 0;
  for (const PixelMatch& p : m.matches) {
    if (p.u1 + 3 + 7 >= 200) continue;
    ++interior;
    good += std::abs(p.u2 - p.u1 - 3.0) <= 0.5 && std::abs(p.v2 - p.v1) <= 0.5;
  }
  EXPECT_EQ(good, interior);
}

TEST(MatchPixels, FlatImagesGiveNothing) {
  Raster a(100, 80, 1, "flat");
  std::fill(a.data.begin(), a.data.end(), 90);
  EXPECT_TRUE(match_pixels(a, a).matches.empty());
}

TEST(MatchPixels, TemplateLargerThanHalfImageThrows) {
  Raster a(12, 40, 1, "thin");
  EXPECT_THROW(match_pixels(a, a), ImageTooSmall);
}

TEST(LiftMatches, ExactProjectionsLiftToPair) {
  std::vector<Projection> sp{{10, 10, 5, true}, {20, 20, 5, true}};
  std::vector<Projection> tp{{11, 10, 5, true}, {30, 30, 5, true}};
  const std::vector<Point3> spts{{0, 0, 0}, {1, 1, 1}}, tpts{{0, 0, 1}, {2, 2, 2}};
  PixelMatchSet pix;
  pix.matches = {{20, 20, 30, 30, 0.9}, {10, 10, 14, 10, 0.8}};
  const auto c = lift_matches(pix, sp, spts, tp, tpts, 2.0);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c.source_indices[0], 1u);
  EXPECT_EQ(c.target_indices[0], 1u);
  EXPECT_NEAR(c.confidence[0], 0.9, 1e-12);
}

TEST(LiftMatches, RadiusIsInclusiveThreshold) {
  std::vector<Projection> sp{{10, 10, 5, true}};
  std::vector<Projection> tp{{10, 10, 5, true}};
  const std::vector<Point3> pts{{0, 0, 0}};
  PixelMatchSet pix;
  pix.matches = {{13, 10, 10, 10, 0.9}};
  EXPECT_TRUE(lift_matches(pix, sp, pts, tp, pts, 2.0).empty());
  pix.matches = {{12, 10, 10, 10, 0.9}};
  EXPECT_EQ(lift_matches(pix, sp, pts, tp, pts, 2.0).size(), 1u);
}

TEST(LiftMatches, DuplicatesKeepHighestConfidence) {
  std::vector<Projection> sp{{10, 10, 5, true}};
  std::vector<Projection> tp{{10, 10, 5, true}, {40, 10, 5, true}};
  const std::vector<Point3> spts{{0, 0, 0}}, tpts{{0, 0, 0}, {1, 0, 0}};
  PixelMatchSet pix;
  pix.matches = {{10, 10, 10, 10, 0.6}, {10.5, 10, 40, 10, 0.95}, {9.5, 10, 10, 10, 0.7}};
  const auto c = lift_matches(pix, sp, spts, tp, tpts);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c.target_indices[0], 1u);
  EXPECT_NEAR(c.confidence[0], 0.95, 1e-12);
}

TEST(LiftMatches, SyntheticSceneEqualsProjectionTable) {
  // Both epochs seen by one camera; the target is the source shifted 0.3 m
  // along x. Pixel matches are generated from the projection table itself.
  const CameraModel cam = nadir_camera("a", 20.0, 400, 300);
  const auto src = testing::grid_points(20, 15, 0.5);
  std::vector<Point3> tgt;
  for (const auto& p : src) tgt.push_back(p + Vec3(0.3, 0, 0));
  const auto sp = project_to_image(src, cam), tp = project_to_image(tgt, cam);
  PixelMatchSet pix;
  std::mt19937_64 rng(16);
  std::uniform_real_distribution<double> off(-0.7, 0.7);
  std::map<PointIndex, PointIndex> table;
  for (std::size_t i = 0; i < src.size(); i += 3) {
    pix.matches.push_back({sp[i].u + off(rng), sp[i].v + off(rng), tp[i].u + off(rng), tp[i].v + off(rng), 0.9});
    table[i] = i;
  }
  const auto c = lift_matches(pix, sp, src, tp, tgt);
  ASSERT_EQ(c.size(), table.size());
  for (std::size_t k = 0; k < c.size(); ++k) {
    EXPECT_EQ(table.at(c.source_indices[k]), c.target_indices[k]);
    EXPECT_LE(std::hypot(sp[c.source_indices[k]].u - pix.matches[k].u1, sp[c.source_indices[k]].v - pix.matches[k].v1),
              2.0);
  }
}

TEST(IntegrateImagePairs, RichestPairFirst) {
  PointCorrespondenceSet small, rich;
  small.add(Point3::Zero(), 1, Point3::Zero(), 50, 0.9);
  small.add(Point3::Zero(), 7, Point3::Zero(), 70, 0.9);
  rich.add(Point3::Zero(), 1, Point3::Zero(), 10, 0.5);
  rich.add(Point3::Zero(), 2, Point3::Zero(), 20, 0.5);
  rich.add(Point3::Zero(), 3, Point3::Zero(), 30, 0.5);
  const std::vector<PointCorrespondenceSet> sets{small, rich};
  const auto out = integrate_image_pairs(sets);
  ASSERT_EQ(out.size(), 4u);
  std::map<PointIndex, PointIndex> got;
  for (std::size_t i = 0; i < out.size(); ++i) got[out.source_indices[i]] = out.target_indices[i];
  EXPECT_EQ(got, (std::map<PointIndex, PointIndex>{{1, 10}, {2, 20}, {3, 30}, {7, 70}}));
}

TEST(FilterByMaxDisplacement, ThresholdAndIdempotence) {
  PointCorrespondenceSet c;
  c.add(Point3::Zero(), 0, Point3(9.9, 0, 0), 0);
  c.add(Point3::Zero(), 1, Point3(10.1, 0, 0), 1);
  c.add(Point3(1, 1, 1), 2, Point3(1, 1, 1), 2);
  const auto f = filter_by_max_displacement(c, 10.0);
  ASSERT_EQ(f.size(), 2u);
  EXPECT_EQ(f.source_indices[0], 0u);
  EXPECT_EQ(f.source_indices[1], 2u);
  EXPECT_EQ(filter_by_max_displacement(f, 10.0).source_indices, f.source_indices);
  PointCorrespondenceSet far;
  far.add(Point3::Zero(), 0, Point3(0, 0, 50), 0);
  EXPECT_TRUE(filter_by_max_displacement(far).empty());
}

TEST(MatchPatches2d, SingleTargetWins) {
  PointCorrespondenceSet c;
  for (PointIndex i = 0; i < 4; ++i) c.add(Point3::Zero(), i, Point3::Zero(), i, 0.8);
  const std::vector<long> sl{0, 0, 0, 0}, tl{5, 5, 5, 5};
  const MatchSet m = match_patches_2d(c, sl, tl, 2);
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m.level, 2);
  EXPECT_EQ(m.matches[0].target_patch_id, 5);
  EXPECT_EQ(m.matches[0].modality, Modality::k2D);
  EXPECT_EQ(m.matches[0].support.size(), 4u);
}

TEST(MatchPatches2d, CountTieGoesToConfidence) {
  PointCorrespondenceSet c;
  for (PointIndex i = 0; i < 10; ++i) c.add(Point3::Zero(), i, Point3::Zero(), i, i < 5 ? 0.6 : 0.8);
  std::vector<long> sl(10, 0), tl(10);
  for (int i = 0; i < 10; ++i) tl[static_cast<std::size_t>(i)] = i < 5 ? 1 : 2;
  const MatchSet m = match_patches_2d(c, sl, tl, 1);
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m.matches[0].target_patch_id, 2);
  EXPECT_EQ(m.matches[0].support.size(), 5u);
}

TEST(MatchPatches2d, EqualsHistogramRecount) {
  std::mt19937_64 rng(17);
  const std::size_t n = 400;
  std::uniform_int_distribution<long> lab(-1, 7);
  std::uniform_real_distribution<double> conf(0.5, 1.0);
  std::vector<long> sl(n), tl(n);
  for (auto& l : sl) l = lab(rng);
  for (auto& l : tl) l = lab(rng);
  PointCorrespondenceSet c;
  std::uniform_int_distribution<PointIndex> pick(0, n - 1);
  for (int k = 0; k < 300; ++k) c.add(Point3::Zero(), pick(rng), Point3::Zero(), pick(rng), conf(rng));
  const MatchSet m = match_patches_2d(c, sl, tl, 1);

  std::map<long, std::map<long, std::pair<int, double>>> hist;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const long s = sl[c.source_indices[i]], t = tl[c.target_indices[i]];
    if (s < 0 || t < 0) continue;
    hist[s][t].first++;
    hist[s][t].second += c.confidence[i];
  }
  ASSERT_EQ(m.size(), hist.size());
  for (const PatchMatch& pm : m.matches) {
    const auto& h = hist.at(pm.source_patch_id);
    const auto& w = h.at(pm.target_patch_id);
    for (const auto& [t, v] : h) {
      EXPECT_TRUE(v.first < w.first || (v.first == w.first && v.second <= w.second));
      if (t < pm.target_patch_id) EXPECT_TRUE(v.first < w.first || v.second < w.second);
    }
    EXPECT_EQ(pm.support.size(), static_cast<std::size_t>(w.first));
  }
}

PatchMatch make_match(long s, long t, Modality mod, std::size_t support, PointIndex first = 0) {
  PatchMatch m;
  m.source_patch_id = s;
  m.target_patch_id = t;
  m.modality = mod;
  for (std::size_t i = 0; i < support; ++i) m.support.add(Point3::Zero(), first + i, Point3::Zero(), first + i);
  return m;
}

TEST(MergeMatchSets, DisjointSetsConcatenate) {
  MatchSet a, b;
  a.matches = {make_match(0, 10, Modality::k3D, 3)};
  b.matches = {make_match(1, 11, Modality::k2D, 2)};
  const MatchSet m = merge_match_sets(a, b);
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m.matches[0].modality, Modality::k3D);
  EXPECT_EQ(m.matches[1].modality, Modality::k2D);
}

TEST(MergeMatchSets, SamePairMergesSupport) {
  MatchSet a, b;
  a.matches = {make_match(0, 10, Modality::k3D, 3)};
  b.matches = {make_match(0, 10, Modality::k2D, 2, 100)};
  const MatchSet m = merge_match_sets(a, b);
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m.matches[0].support.size(), 5u);
  EXPECT_EQ(m.matches[0].modality, Modality::k3D);
}

TEST(MergeMatchSets, ConflictKeepsGeometryInEitherOrder) {
  MatchSet a, b;
  a.matches = {make_match(0, 10, Modality::k3D, 3), make_match(4, 14, Modality::k3D, 1)};
  b.matches = {make_match(4, 19, Modality::k2D, 9), make_match(0, 11, Modality::k2D, 50)};
  const MatchSet m1 = merge_match_sets(a, b);
  std::reverse(a.matches.begin(), a.matches.end());
  std::reverse(b.matches.begin(), b.matches.end());
  const MatchSet m2 = merge_match_sets(a, b);
  for (const MatchSet* m : {&m1, &m2}) {
    ASSERT_EQ(m->size(), 2u);
    EXPECT_EQ(m->matches[0].target_patch_id, 10);
    EXPECT_EQ(m->matches[0].support.size(), 3u);
    EXPECT_EQ(m->matches[1].target_patch_id, 14);
  }
}

TEST(MergeMatchSets, InjectivityKeepsLargerSupport) {
  MatchSet a, b;
  a.matches = {make_match(3, 10, Modality::k3D, 2)};
  b.matches = {make_match(1, 10, Modality::k2D, 5), make_match(2, 12, Modality::k2D, 1),
               make_match(5, 12, Modality::k2D, 1)};
  const MatchSet m = merge_match_sets(a, b);
  EXPECT_TRUE(m.is_injective());
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m.matches[0].source_patch_id, 1);
  EXPECT_EQ(m.matches[1].source_patch_id, 2);
}

}  // namespace
}  // namespace patchflow
