#pragma once

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "patchflow/errors.hpp"
#include "patchflow/geometry/nn_index.hpp"

namespace patchflow {

/// Neighborhood used for covariance analysis: k nearest (query included) or
/// a fixed radius when `radius` is set.
struct Neighborhood {
  std::size_t k = 16;
  std::optional<double> radius;
};

/// Eigenvalue shape descriptors per point. Points whose neighborhood holds
/// fewer than 3 points (or is degenerate) are flagged invalid and carry zeros.
struct LocalGeomFeatures {
  std::vector<double> linearity;
  std::vector<double> planarity;
  std::vector<double> curvature;
  std::vector<Vec3> normal;
  std::vector<std::uint8_t> valid;

  std::size_t size() const { return linearity.size(); }

  void resize(std::size_t n) {
    linearity.assign(n, 0.0);
    planarity.assign(n, 0.0);
    curvature.assign(n, 0.0);
    normal.assign(n, Vec3::UnitZ());
    valid.assign(n, 0);
  }
};

/// Normals are flipped to face the viewpoint; without one they face +z.
struct FeatureOptions {
  Neighborhood neighborhood;
  std::optional<Point3> viewpoint;
};

struct CovarianceShape {
  double l1 = 0, l2 = 0, l3 = 0;  // descending, clamped at 0
  Vec3 normal = Vec3::UnitZ();
  bool valid = false;
};

inline CovarianceShape covariance_shape(std::span<const Point3> pts) {
  CovarianceShape s;
  if (pts.size() < 3) return s;
  Point3 mean = Point3::Zero();
  for (const Point3& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const Point3& p : pts) {
    const Vec3 d = p - mean;
    cov.noalias() += d * d.transpose();
  }
  cov /= static_cast<double>(pts.size());
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  const Eigen::Vector3d ev = eig.eigenvalues();  // ascending
  s.l1 = std::max(ev(2), 0.0);
  s.l2 = std::max(ev(1), 0.0);
  s.l3 = std::max(ev(0), 0.0);
  s.normal = eig.eigenvectors().col(0).normalized();
  s.valid = s.l1 > 0.0;
  return s;
}

inline Vec3 orient_normal(Vec3 n, const Point3& at, const std::optional<Point3>& viewpoint) {
  const Vec3 toward = viewpoint ? Vec3(*viewpoint - at) : Vec3::UnitZ();
  if (n.dot(toward) < 0.0) n = -n;
  return n;
}

/// Features at `queries`, using neighbors drawn from `index`.
inline LocalGeomFeatures local_covariance_features_at(const NNIndex& index, std::span<const Point3> queries,
                                                      const FeatureOptions& opts = {}) {
  LocalGeomFeatures f;
  f.resize(queries.size());
  std::vector<Point3> nbh;
  std::vector<PointIndex> ids;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    nbh.clear();
    if (opts.neighborhood.radius) {
      index.radius_indices(queries[i], *opts.neighborhood.radius, ids);
      for (PointIndex j : ids) nbh.push_back(index.point(j));
    } else {
      for (const Neighbor& nb : index.knn(queries[i], opts.neighborhood.k)) nbh.push_back(index.point(nb.index));
    }
    const CovarianceShape s = covariance_shape(nbh);
    if (!s.valid) continue;
    f.linearity[i] = std::clamp((s.l1 - s.l2) / s.l1, 0.0, 1.0);
    f.planarity[i] = std::clamp((s.l2 - s.l3) / s.l1, 0.0, 1.0);
    f.curvature[i] = std::clamp(s.l3 / (s.l1 + s.l2 + s.l3), 0.0, 1.0);
    f.normal[i] = orient_normal(s.normal, queries[i], opts.viewpoint);
    f.valid[i] = 1;
  }
  return f;
}

/// linearity = (l1-l2)/l1, planarity = (l2-l3)/l1, curvature = l3/(l1+l2+l3)
/// from the neighborhood covariance eigenvalues l1 >= l2 >= l3.
inline LocalGeomFeatures local_covariance_features(std::span<const Point3> cloud, const FeatureOptions& opts = {}) {
  if (cloud.empty()) return {};
  const NNIndex index(cloud);
  return local_covariance_features_at(index, cloud, opts);
}

/// Mean distance to the nearest other point over a fixed-seed sample of at
/// most `max_samples` points (all points when the cloud is smaller).
inline double mean_scan_resolution(const NNIndex& index, std::size_t max_samples = 50000,
                                   std::uint64_t seed = 0x5eed) {
  const std::size_t n = index.size();
  if (n < 2) throw DegenerateInput("mean scan resolution needs at least 2 points");
  std::vector<PointIndex> sample(n);
  for (std::size_t i = 0; i < n; ++i) sample[i] = i;
  if (n > max_samples) {
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < max_samples; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, n - 1);
      std::swap(sample[i], sample[pick(rng)]);
    }
    sample.resize(max_samples);
  }
  double sum = 0.0;
  for (PointIndex i : sample) {
    for (const Neighbor& nb : index.knn(index.point(i), 2)) {
      if (nb.index != i) {
        sum += nb.distance;
        break;
      }
    }
  }
  return sum / static_cast<double>(sample.size());
}

inline double mean_scan_resolution(std::span<const Point3> cloud, std::size_t max_samples = 50000) {
  if (cloud.size() < 2) throw DegenerateInput("mean scan resolution needs at least 2 points");
  const NNIndex index(cloud);
  return mean_scan_resolution(index, max_samples);
}

}  // namespace patchflow
