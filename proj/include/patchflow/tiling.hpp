#pragma once

#include <algorithm>
#include <array>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "patchflow/errors.hpp"
#include "patchflow/io/point_cloud.hpp"
#include "patchflow/io/text.hpp"

namespace patchflow {

enum class Axis { kX = 0, kY = 1, kZ = 2 };

inline const char* to_string(Axis a) { return a == Axis::kX ? "X" : (a == Axis::kY ? "Y" : "Z"); }

/// Coordinates kept when `dropped` is projected away.
inline std::array<int, 2> kept_axes(Axis dropped) {
  switch (dropped) {
    case Axis::kX: return {1, 2};
    case Axis::kY: return {0, 2};
    default: return {0, 1};
  }
}

inline Eigen::Vector2d project2d(const Point3& p, Axis dropped) {
  const auto k = kept_axes(dropped);
  return {p(k[0]), p(k[1])};
}

struct Rect {
  Eigen::Vector2d lo = Eigen::Vector2d::Zero();
  Eigen::Vector2d hi = Eigen::Vector2d::Zero();

  bool contains_dilated(const Eigen::Vector2d& p, double margin) const {
    return p.x() >= lo.x() - margin && p.x() <= hi.x() + margin && p.y() >= lo.y() - margin &&
           p.y() <= hi.y() + margin;
  }
  bool operator==(const Rect& o) const { return lo == o.lo && hi == o.hi; }
};

struct Tile {
  Rect bounds2d;
  std::vector<PointIndex> point_indices;
  Axis projection_axis = Axis::kZ;
};

struct TilePair {
  Tile source;
  Tile target;
  int pair_id = 0;
};

/// Drop-axis whose projection of P and Q has the largest bounding rectangle;
/// ties prefer dropping Z, then Y.
inline Axis select_projection_axis(const PointCloud& p, const PointCloud& q) {
  if (p.empty() && q.empty()) throw DegenerateInput("select_projection_axis on empty clouds");
  Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
  Eigen::Vector3d hi = -lo;
  for (const auto* c : {&p, &q})
    for (const Point3& x : c->points) {
      lo = lo.cwiseMin(x);
      hi = hi.cwiseMax(x);
    }
  const Eigen::Vector3d e = hi - lo;
  const double drop_x = e.y() * e.z(), drop_y = e.x() * e.z(), drop_z = e.x() * e.y();
  if (drop_z >= drop_y && drop_z >= drop_x) return Axis::kZ;
  if (drop_y >= drop_x) return Axis::kY;
  return Axis::kX;
}

namespace detail {

struct CellBuilder {
  const std::vector<Eigen::Vector2d>& src2d;
  std::size_t max_points;
  std::vector<std::pair<Rect, std::vector<PointIndex>>> leaves;

  // Splits at the median source coordinate of the longer edge; points on
  // the split line go to the upper cell, so core cells never overlap.
  void split(const Rect& cell, std::vector<PointIndex> ids) {
    if (ids.size() < max_points) {
      leaves.emplace_back(cell, std::move(ids));
      return;
    }
    const Eigen::Vector2d ext = cell.hi - cell.lo;
    const int first = ext.x() >= ext.y() ? 0 : 1;
    for (int attempt = 0; attempt < 2; ++attempt) {
      const int d = attempt == 0 ? first : 1 - first;
      std::vector<double> v;
      v.reserve(ids.size());
      for (PointIndex i : ids) v.push_back(src2d[i](d));
      std::sort(v.begin(), v.end());
      double cut = v[v.size() / 2];
      if (cut == v.front()) {
        const auto it = std::upper_bound(v.begin(), v.end(), v.front());
        if (it == v.end()) continue;  // all equal along d
        cut = *it;
      }
      Rect lower = cell, upper = cell;
      lower.hi(d) = cut;
      upper.lo(d) = cut;
      std::vector<PointIndex> a, b;
      for (PointIndex i : ids) (src2d[i](d) < cut ? a : b).push_back(i);
      split(lower, std::move(a));
      split(upper, std::move(b));
      return;
    }
    leaves.emplace_back(cell, std::move(ids));  // coincident points, cannot split
  }
};

}  // namespace detail

/// Recursive bisection of the joint 2D bounding box until every cell holds
/// fewer than `max_points` source points. Target tiles take every target
/// point inside the cell dilated by `overlap_margin`.
inline std::vector<TilePair> tile_pair(const PointCloud& p, const PointCloud& q, std::size_t max_points = 1000000,
                                       double overlap_margin = 10.0) {
  if (p.empty() || q.empty()) throw DegenerateInput("tile_pair needs non-empty source and target clouds");
  if (max_points < 1000) throw InvalidParams("max_points must be at least 1000");
  if (!(overlap_margin >= 0.0)) throw InvalidParams("overlap_margin must be non-negative");

  const Axis axis = select_projection_axis(p, q);
  std::vector<Eigen::Vector2d> src2d(p.size()), tgt2d(q.size());
  Rect root{Eigen::Vector2d::Constant(std::numeric_limits<double>::infinity()),
            Eigen::Vector2d::Constant(-std::numeric_limits<double>::infinity())};
  for (std::size_t i = 0; i < p.size(); ++i) {
    src2d[i] = project2d(p.points[i], axis);
    root.lo = root.lo.cwiseMin(src2d[i]);
    root.hi = root.hi.cwiseMax(src2d[i]);
  }
  for (std::size_t i = 0; i < q.size(); ++i) {
    tgt2d[i] = project2d(q.points[i], axis);
    root.lo = root.lo.cwiseMin(tgt2d[i]);
    root.hi = root.hi.cwiseMax(tgt2d[i]);
  }

  detail::CellBuilder builder{src2d, max_points, {}};
  std::vector<PointIndex> all(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) all[i] = i;
  builder.split(root, std::move(all));

  std::vector<TilePair> out;
  int next_id = 0;
  for (auto& [cell, ids] : builder.leaves) {
    if (ids.empty()) continue;
    TilePair tp;
    tp.pair_id = next_id++;
    tp.source.bounds2d = cell;
    tp.source.projection_axis = axis;
    tp.source.point_indices = std::move(ids);
    tp.target.bounds2d = cell;
    tp.target.projection_axis = axis;
    for (std::size_t i = 0; i < q.size(); ++i)
      if (cell.contains_dilated(tgt2d[i], overlap_margin)) tp.target.point_indices.push_back(i);
    out.push_back(std::move(tp));
  }
  return out;
}

namespace io {

/// pair_id,axis,min_u,min_v,max_u,max_v,source_points,target_points
inline void write_tile_map(const std::string& path, const std::vector<TilePair>& tiles) {
  auto out = open_out(path);
  out << "pair_id,axis,min_u,min_v,max_u,max_v,source_points,target_points\n";
  for (const auto& t : tiles) {
    const Rect& r = t.source.bounds2d;
    out << t.pair_id << ',' << to_string(t.source.projection_axis) << ',' << format_double(r.lo.x()) << ','
        << format_double(r.lo.y()) << ',' << format_double(r.hi.x()) << ',' << format_double(r.hi.y()) << ','
        << t.source.point_indices.size() << ',' << t.target.point_indices.size() << '\n';
  }
}

}  // namespace io
}  // namespace patchflow
