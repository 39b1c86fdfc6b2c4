#pragma once

#include <algorithm>
#include <array>
#include <map>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "patchflow/coarse/types.hpp"
#include "patchflow/errors.hpp"
#include "patchflow/geometry/local_features.hpp"
#include "patchflow/io/tables.hpp"
#include "patchflow/partition/hierarchy.hpp"

namespace patchflow {

struct Downsampled {
  std::vector<PointIndex> indices;  // ascending
  double voxel_size = 0.0;
};

/// Voxel grid with edge `c` times the mean scan resolution; each occupied
/// voxel keeps the point closest to its centroid (lowest index on ties).
inline Downsampled adaptive_downsample(std::span<const Point3> pts, double c = 2.0,
                                       std::optional<double> resolution = std::nullopt) {
  Downsampled out;
  if (pts.empty()) return out;
  if (!(c > 0.0)) throw InvalidParams("voxel factor must be positive");
  if (pts.size() == 1) {
    out.indices = {0};
    return out;
  }
  const double res = resolution ? *resolution : mean_scan_resolution(pts);
  out.voxel_size = c * res;
  if (!(out.voxel_size > 0.0)) {
    out.indices = {0};
    return out;
  }
  Point3 lo = pts[0];
  for (const auto& p : pts) lo = lo.cwiseMin(p);
  struct Cell {
    Vec3 sum = Vec3::Zero();
    std::vector<PointIndex> members;
  };
  std::map<std::array<long long, 3>, Cell> cells;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const Vec3 k = ((pts[i] - lo) / out.voxel_size).array().floor();
    Cell& cell = cells[{static_cast<long long>(k.x()), static_cast<long long>(k.y()), static_cast<long long>(k.z())}];
    cell.sum += pts[i];
    cell.members.push_back(i);
  }
  out.indices.reserve(cells.size());
  for (const auto& [key, cell] : cells) {
    const Point3 centroid = cell.sum / static_cast<double>(cell.members.size());
    PointIndex best = cell.members.front();
    double bd = (pts[best] - centroid).squaredNorm();
    for (PointIndex i : cell.members) {
      const double d = (pts[i] - centroid).squaredNorm();
      if (d < bd) {
        bd = d;
        best = i;
      }
    }
    out.indices.push_back(best);
  }
  std::sort(out.indices.begin(), out.indices.end());
  return out;
}

namespace detail {

struct PairFeature {
  double f1, f2, f3;
  bool valid;
};

// Darboux-frame angles of a point pair, with the source chosen so that the
// frame is built on the normal making the smaller angle with the line.
inline PairFeature pair_feature(const Point3& p1, const Vec3& n1, const Point3& p2, const Vec3& n2) {
  Vec3 dp = p2 - p1;
  const double len = dp.norm();
  if (len == 0.0) return {0, 0, 0, false};
  Vec3 ns = n1, nt = n2;
  double f3 = n1.dot(dp) / len;
  const double a2 = n2.dot(dp) / len;
  if (std::acos(std::clamp(std::abs(f3), 0.0, 1.0)) > std::acos(std::clamp(std::abs(a2), 0.0, 1.0))) {
    std::swap(ns, nt);
    dp = -dp;
    f3 = -a2;
  }
  Vec3 v = dp.cross(ns);
  const double vn = v.norm();
  if (vn == 0.0) return {0, 0, 0, false};
  v /= vn;
  const Vec3 w = ns.cross(v);
  return {std::atan2(w.dot(nt), ns.dot(nt)), v.dot(nt), f3, true};
}

inline int bin11(double x, double lo, double hi) {
  const int b = static_cast<int>(std::floor(11.0 * (x - lo) / (hi - lo)));
  return std::clamp(b, 0, 10);
}

}  // namespace detail

struct FpfhOptions {
  /// Neighborhood radius as a multiple of the mean scan resolution.
  double radius_factor = 5.0;
  Neighborhood normal_neighborhood{};
  std::optional<Point3> viewpoint;
};

/// 33-bin fast point feature histograms at `at` (indices into `pts`).
/// Normals come from the full point set; histogram neighbors are the other
/// `at` points within the radius.
inline PointFeatureSet fpfh_features(std::span<const Point3> pts, std::span<const PointIndex> at, double resolution,
                                     const FpfhOptions& opts = {}) {
  PointFeatureSet out;
  out.provider_id = "builtin";
  out.point_indices.assign(at.begin(), at.end());
  out.descriptors = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(at.size()), 33);
  if (at.empty()) return out;
  const NNIndex full(pts);
  std::vector<Point3> sub(at.size());
  for (std::size_t i = 0; i < at.size(); ++i) sub[i] = pts[at[i]];
  FeatureOptions fo;
  fo.neighborhood = opts.normal_neighborhood;
  fo.viewpoint = opts.viewpoint;
  const LocalGeomFeatures geo = local_covariance_features_at(full, sub, fo);
  const NNIndex index(sub);
  const double radius = opts.radius_factor * resolution;

  const std::size_t n = sub.size();
  std::vector<std::vector<Neighbor>> nbrs(n);
  Eigen::MatrixXd spfh = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), 33);
  for (std::size_t i = 0; i < n; ++i) {
    nbrs[i] = index.radius(sub[i], radius);
    if (!geo.valid[i]) continue;
    int used = 0;
    for (const Neighbor& nb : nbrs[i]) {
      if (nb.index == i || !geo.valid[nb.index]) continue;
      const auto pf = detail::pair_feature(sub[i], geo.normal[i], sub[nb.index], geo.normal[nb.index]);
      if (!pf.valid) continue;
      const auto r = static_cast<Eigen::Index>(i);
      spfh(r, detail::bin11(pf.f1, -std::numbers::pi, std::numbers::pi)) += 1.0;
      spfh(r, 11 + detail::bin11(pf.f2, -1.0, 1.0)) += 1.0;
      spfh(r, 22 + detail::bin11(pf.f3, -1.0, 1.0)) += 1.0;
      ++used;
    }
    if (used > 0) spfh.row(static_cast<Eigen::Index>(i)) /= used;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    Eigen::RowVectorXd h = spfh.row(r);
    Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(33);
    int k = 0;
    for (const Neighbor& nb : nbrs[i]) {
      if (nb.index == i || nb.distance <= 0.0) continue;
      acc += spfh.row(static_cast<Eigen::Index>(nb.index)) / nb.distance;
      ++k;
    }
    if (k > 0) h += acc / k;
    for (int b = 0; b < 3; ++b) {
      const double s = h.segment(11 * b, 11).sum();
      if (s > 0.0) h.segment(11 * b, 11) /= s;
    }
    const double norm = h.norm();
    if (norm > 0.0) {
      out.descriptors.row(r) = h / norm;
    } else {
      out.descriptors(r, 0) = 1.0;
    }
  }
  out.rebuild_lookup();
  return out;
}

enum class FeatureProvider { kBuiltin, kImport };

/// Imported descriptors restricted to `at`; every index of `at` must be
/// present in the file.
inline PointFeatureSet select_imported_features(const PointFeatureSet& imported, std::span<const PointIndex> at,
                                                std::span<const PointIndex> to_import_key = {}) {
  PointFeatureSet out;
  out.provider_id = "import";
  out.point_indices.assign(at.begin(), at.end());
  out.descriptors.resize(static_cast<Eigen::Index>(at.size()), imported.dim());
  for (std::size_t i = 0; i < at.size(); ++i) {
    const PointIndex key = to_import_key.empty() ? at[i] : to_import_key[at[i]];
    const long row = imported.row_of(key);
    if (row < 0) throw ImportKeyMismatch("imported features lack point index " + std::to_string(key));
    out.descriptors.row(static_cast<Eigen::Index>(i)) = imported.descriptors.row(row);
  }
  out.rebuild_lookup();
  return out;
}

/// Mean of the descriptors of the featured points inside `patch`,
/// re-normalized. With `weights`, each descriptor is scaled by its weight
/// (missing points weigh 0).
inline PatchFeature aggregate_patch_feature(const Patch& patch, const PointFeatureSet& feats,
                                            const std::unordered_map<PointIndex, double>* weights = nullptr) {
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(feats.dim());
  std::size_t hits = 0;
  for (PointIndex i : patch.point_indices) {
    const long row = feats.row_of(i);
    if (row < 0) continue;
    double w = 1.0;
    if (weights) {
      const auto it = weights->find(i);
      w = it == weights->end() ? 0.0 : it->second;
    }
    sum += w * feats.descriptors.row(row).transpose();
    ++hits;
  }
  if (hits == 0) throw EmptyPatchFeature("patch " + std::to_string(patch.patch_id) + " holds no featured point");
  const double n = sum.norm();
  if (!(n > 0.0)) throw EmptyPatchFeature("patch " + std::to_string(patch.patch_id) + " has zero aggregate weight");
  return {patch.patch_id, patch.level, sum / n};
}

}  // namespace patchflow
