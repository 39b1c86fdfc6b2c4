#pragma once

#include <Eigen/Dense>

#include <span>
#include <vector>

#include "patchflow/errors.hpp"
#include "patchflow/geometry/types.hpp"

namespace patchflow {

inline std::vector<Point3> apply_transform(const RigidTransform& t, std::span<const Point3> pts) {
  std::vector<Point3> out;
  out.reserve(pts.size());
  for (const Point3& p : pts) out.push_back(t(p));
  return out;
}

/// Least-squares rigid transform mapping `src[i]` onto `dst[i]`.
///
/// Throws DegenerateInput when fewer than three pairs are given or the
/// centered source points span less than a plane. The reflection branch of
/// the SVD solution is folded back by flipping the axis of the smallest
/// singular value, so the returned rotation always has det +1.
inline RigidTransform kabsch(std::span<const Point3> src, std::span<const Point3> dst) {
  const std::size_t n = src.size();
  if (n < 3 || dst.size() != n) throw DegenerateInput("kabsch needs at least 3 paired points");

  Point3 cs = Point3::Zero();
  Point3 cd = Point3::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    cs += src[i];
    cd += dst[i];
  }
  cs /= static_cast<double>(n);
  cd /= static_cast<double>(n);

  Eigen::Matrix3d cross = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 a = src[i] - cs;
    cross.noalias() += a * (dst[i] - cd).transpose();
    cov.noalias() += a * a.transpose();
  }

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov, Eigen::EigenvaluesOnly);
  const Eigen::Vector3d ev = eig.eigenvalues();  // ascending
  if (!(ev(2) > 0.0) || ev(1) <= 1e-12 * ev(2)) {
    throw DegenerateInput("kabsch source points are collinear or coincident");
  }

  Eigen::JacobiSVD<Eigen::Matrix3d> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Matrix3d& u = svd.matrixU();
  const Eigen::Matrix3d& v = svd.matrixV();
  Eigen::Vector3d d(1.0, 1.0, (v * u.transpose()).determinant() < 0.0 ? -1.0 : 1.0);
  const Eigen::Matrix3d r = v * d.asDiagonal() * u.transpose();
  return RigidTransform::from(r, cd - r * cs);
}

inline RigidTransform kabsch(const PointCorrespondenceSet& corrs) {
  return kabsch(std::span<const Point3>(corrs.source), std::span<const Point3>(corrs.target));
}

/// Root-mean-square of ||t(src[i]) - dst[i]||.
inline double correspondence_rmse(const RigidTransform& t, std::span<const Point3> src,
                                  std::span<const Point3> dst) {
  if (src.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i) s += (t(src[i]) - dst[i]).squaredNorm();
  return std::sqrt(s / static_cast<double>(src.size()));
}

}  // namespace patchflow
