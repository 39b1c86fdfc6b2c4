#pragma once

#include <cmath>
#include <optional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "patchflow/coarse/point_features.hpp"
#include "patchflow/dvf.hpp"
#include "patchflow/errors.hpp"
#include "patchflow/geometry/icp.hpp"
#include "patchflow/geometry/local_features.hpp"
#include "patchflow/io/text.hpp"
#include "patchflow/parallel.hpp"
#include "patchflow/tiling.hpp"

namespace patchflow {

struct PiecewiseIcpParams {
  double tile_size = 10.0;
  /// Dilation of each tile's target region.
  double margin = 10.0;
  IcpParams icp{};
  /// Dropped axis of the tile grid; chosen from the clouds when unset.
  std::optional<Axis> axis;
  std::size_t threads = 0;
};

/// Uniform grid tiles; per tile one ICP from identity and every source point
/// of the tile gets T(p) - p. Tiles with fewer than 3 source points or an
/// empty target region produce no entries. Entries are stamped level 0.
inline DisplacementVectorField baseline_piecewise_icp(const PointCloud& p, const PointCloud& q,
                                                      const PiecewiseIcpParams& params = {}) {
  if (!(params.tile_size > 0.0)) throw InvalidParams("tile size must be positive");
  if (!(params.margin >= 0.0)) throw InvalidParams("tile margin must be non-negative");
  DisplacementVectorField out;
  if (p.empty() || q.empty()) return out;
  const Axis axis = params.axis ? *params.axis : select_projection_axis(p, q);
  Eigen::Vector2d lo = project2d(p.points[0], axis);
  for (const Point3& x : p.points) lo = lo.cwiseMin(project2d(x, axis));
  using Cell = std::pair<long long, long long>;
  auto cell_of = [&](const Point3& x) {
    const Eigen::Vector2d c = ((project2d(x, axis) - lo) / params.tile_size).array().floor();
    return Cell{static_cast<long long>(c.x()), static_cast<long long>(c.y())};
  };
  std::map<Cell, std::vector<PointIndex>> cells;
  for (std::size_t i = 0; i < p.size(); ++i) cells[cell_of(p.points[i])].push_back(i);
  std::vector<std::pair<Cell, std::vector<PointIndex>>> tiles(cells.begin(), cells.end());

  std::map<Cell, std::vector<PointIndex>> q_cells;
  for (std::size_t j = 0; j < q.size(); ++j) q_cells[cell_of(q.points[j])].push_back(j);
  const long long ring = static_cast<long long>(std::ceil(params.margin / params.tile_size));

  std::vector<RigidTransform> transforms(tiles.size());
  std::vector<char> ok(tiles.size(), 0);
  parallel_for(tiles.size(), params.threads, [&](std::size_t t) {
    const auto& [cell, ids] = tiles[t];
    if (ids.size() < 3) return;
    const Eigen::Vector2d a = lo + params.tile_size * Eigen::Vector2d(cell.first, cell.second);
    const Rect rect{a, a + Eigen::Vector2d::Constant(params.tile_size)};
    std::vector<Point3> src, tgt;
    src.reserve(ids.size());
    for (PointIndex i : ids) src.push_back(p.points[i]);
    for (long long dx = -ring; dx <= ring; ++dx)
      for (long long dy = -ring; dy <= ring; ++dy) {
        const auto it = q_cells.find({cell.first + dx, cell.second + dy});
        if (it == q_cells.end()) continue;
        for (PointIndex j : it->second)
          if (rect.contains_dilated(project2d(q.points[j], axis), params.margin)) tgt.push_back(q.points[j]);
      }
    if (tgt.empty()) return;
    try {
      transforms[t] = icp_point_to_point(src, tgt, RigidTransform::identity(), params.icp).transform;
      ok[t] = 1;
    } catch (const DegenerateInput&) {
    }
  });
  for (std::size_t t = 0; t < tiles.size(); ++t) {
    if (!ok[t]) continue;
    for (PointIndex i : tiles[t].second)
      out.set(i, {p.points[i], transforms[t](p.points[i]) - p.points[i], 0, static_cast<long>(t), Modality::k3D});
  }
  return out;
}

struct M3c2Params {
  double normal_radius = 2.0;
  double cylinder_radius = 1.0;
  double max_depth = 10.0;
  /// Core points are a voxel downsampling of P with this edge; 0 keeps
  /// every point of P as a core point.
  double core_spacing = 0.0;
  std::size_t threads = 0;
};

struct M3c2Result {
  PointIndex core = 0;
  Point3 position = Point3::Zero();
  Vec3 normal = Vec3::UnitZ();
  double distance = 0.0;
  std::size_t p_count = 0;
  std::size_t q_count = 0;
};

namespace detail {

/// Mean axial offset (along n, from c) of the cloud points inside the
/// cylinder; returns the member count.
inline std::size_t cylinder_mean(const NNIndex& index, const Point3& c, const Vec3& n, double radius, double depth,
                                 double& mean_axial) {
  const double reach = std::sqrt(radius * radius + depth * depth);
  std::size_t count = 0;
  double sum = 0.0;
  for (const Neighbor& nb : index.radius(c, reach)) {
    const Vec3 d = index.point(nb.index) - c;
    const double axial = d.dot(n);
    if (std::abs(axial) > depth) continue;
    if ((d - axial * n).norm() > radius) continue;
    sum += axial;
    ++count;
  }
  if (count > 0) mean_axial = sum / static_cast<double>(count);
  return count;
}

}  // namespace detail

/// Single-scale M3C2: per core point a PCA normal from P within
/// `normal_radius` (oriented toward +z, or +x/+y for vertical normals), then
/// the signed difference of the mean axial positions of Q and P inside the
/// normal-aligned cylinder. Core points with fewer than 3 normal neighbors or
/// an empty cylinder on either side are absent from the result.
inline std::vector<M3c2Result> baseline_m3c2(const PointCloud& p, const PointCloud& q, const M3c2Params& params = {}) {
  if (!(params.normal_radius > 0.0) || !(params.cylinder_radius > 0.0) || !(params.max_depth > 0.0))
    throw InvalidParams("M3C2 radii and depth must be positive");
  if (params.core_spacing < 0.0) throw InvalidParams("M3C2 core spacing must be non-negative");
  if (p.empty() || q.empty()) return {};
  std::vector<PointIndex> cores;
  if (params.core_spacing > 0.0) {
    cores = adaptive_downsample(p.points, 1.0, params.core_spacing).indices;
  } else {
    cores.resize(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) cores[i] = i;
  }
  const NNIndex pi(p.points), qi(q.points);
  std::vector<M3c2Result> all(cores.size());
  std::vector<char> ok(cores.size(), 0);
  parallel_for(cores.size(), params.threads, [&](std::size_t k) {
    const Point3& c = p.points[cores[k]];
    std::vector<Point3> nbh;
    for (const Neighbor& nb : pi.radius(c, params.normal_radius)) nbh.push_back(pi.point(nb.index));
    const CovarianceShape s = covariance_shape(nbh);
    if (!s.valid) return;
    Vec3 n = s.normal;
    int major = 2;
    if (std::abs(n.z()) < 1e-6) major = std::abs(n.y()) < 1e-6 ? 0 : 1;
    if (n(major) < 0.0) n = -n;
    double mp = 0.0, mq = 0.0;
    const std::size_t np = detail::cylinder_mean(pi, c, n, params.cylinder_radius, params.max_depth, mp);
    const std::size_t nq = detail::cylinder_mean(qi, c, n, params.cylinder_radius, params.max_depth, mq);
    if (np == 0 || nq == 0) return;
    all[k] = {cores[k], c, n, mq - mp, np, nq};
    ok[k] = 1;
  });
  std::vector<M3c2Result> out;
  for (std::size_t k = 0; k < all.size(); ++k)
    if (ok[k]) out.push_back(all[k]);
  return out;
}

namespace io {

inline void write_m3c2(const std::string& path, const std::vector<M3c2Result>& rows) {
  auto out = open_out(path);
  out << "x,y,z,nx,ny,nz,distance,p_count,q_count\n";
  for (const auto& r : rows) {
    for (int k = 0; k < 3; ++k) out << format_double(r.position(k)) << ',';
    for (int k = 0; k < 3; ++k) out << format_double(r.normal(k)) << ',';
    out << format_double(r.distance) << ',' << r.p_count << ',' << r.q_count << '\n';
  }
}

}  // namespace io

}  // namespace patchflow
