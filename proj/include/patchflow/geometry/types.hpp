#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace patchflow {

using Point3 = Eigen::Vector3d;
using Vec3 = Eigen::Vector3d;
using PointIndex = std::size_t;

/// Proper rigid motion x -> rotation * x + translation.
struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return {}; }

  static RigidTransform from(const Eigen::Matrix3d& r, const Vec3& t) {
    RigidTransform out;
    out.rotation = r;
    out.translation = t;
    return out;
  }

  /// Rotation about `center` followed by `shift`.
  static RigidTransform about(const Eigen::Matrix3d& r, const Point3& center, const Vec3& shift) {
    return from(r, center - r * center + shift);
  }

  Point3 operator()(const Point3& p) const { return rotation * p + translation; }

  /// Composition: (a * b)(x) == a(b(x)).
  RigidTransform operator*(const RigidTransform& rhs) const {
    return from(rotation * rhs.rotation, rotation * rhs.translation + translation);
  }

  RigidTransform inverse() const {
    const Eigen::Matrix3d rt = rotation.transpose();
    return from(rt, -(rt * translation));
  }

  Eigen::Matrix4d matrix() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = rotation;
    m.topRightCorner<3, 1>() = translation;
    return m;
  }

  /// Orthonormal with det +1 and finite translation.
  bool is_valid(double tol = 1e-9) const {
    if (!translation.allFinite() || !rotation.allFinite()) return false;
    const double ortho = (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    return ortho <= tol && std::abs(rotation.determinant() - 1.0) <= tol;
  }

  /// Rotation angle in radians.
  double angle() const {
    const double c = std::clamp((rotation.trace() - 1.0) / 2.0, -1.0, 1.0);
    return std::acos(c);
  }
};

inline Eigen::Matrix3d rotation_about(const Vec3& axis, double angle_rad) {
  return Eigen::AngleAxisd(angle_rad, axis.normalized()).toRotationMatrix();
}

/// Paired points with their ids in the parent clouds. `confidence` is 1 for
/// geometric matches and the matcher score for image-derived ones.
struct PointCorrespondenceSet {
  std::vector<Point3> source;
  std::vector<Point3> target;
  std::vector<PointIndex> source_indices;
  std::vector<PointIndex> target_indices;
  std::vector<double> confidence;

  std::size_t size() const { return source.size(); }
  bool empty() const { return source.empty(); }

  void add(const Point3& p, PointIndex pi, const Point3& q, PointIndex qi, double conf = 1.0) {
    source.push_back(p);
    target.push_back(q);
    source_indices.push_back(pi);
    target_indices.push_back(qi);
    confidence.push_back(conf);
  }

  void append_from(const PointCorrespondenceSet& other, std::size_t i) {
    add(other.source[i], other.source_indices[i], other.target[i], other.target_indices[i],
        other.confidence[i]);
  }

  void reserve(std::size_t n) {
    source.reserve(n);
    target.reserve(n);
    source_indices.reserve(n);
    target_indices.reserve(n);
    confidence.reserve(n);
  }

  /// Build from bare point lists; indices are positions.
  static PointCorrespondenceSet from_points(std::span<const Point3> src, std::span<const Point3> tgt) {
    PointCorrespondenceSet out;
    out.reserve(src.size());
    for (std::size_t i = 0; i < src.size() && i < tgt.size(); ++i) out.add(src[i], i, tgt[i], i);
    return out;
  }
};

}  // namespace patchflow
