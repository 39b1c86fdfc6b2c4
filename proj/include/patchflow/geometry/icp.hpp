#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "patchflow/errors.hpp"
#include "patchflow/geometry/kabsch.hpp"
#include "patchflow/geometry/nn_index.hpp"

namespace patchflow {

struct IcpParams {
  int max_iterations = 30;
  double convergence_tol = 1e-6;
  /// Associations farther than this are ignored; infinity disables gating.
  double max_distance = std::numeric_limits<double>::infinity();
};

struct IcpResult {
  RigidTransform transform;
  double rmse = 0.0;
  int iterations = 0;
  /// RMSE at the initial transform followed by one entry per iteration.
  std::vector<double> rmse_history;
};

namespace detail {

struct Association {
  std::vector<Point3> src;
  std::vector<Point3> dst;
  double truncated_sq_sum = 0.0;
};

// Squared residuals are truncated at max_distance^2, so gated points still
// contribute a constant and the objective stays monotone across iterations.
inline Association associate(const NNIndex& target, std::span<const Point3> source,
                             const RigidTransform& t, double max_distance) {
  Association a;
  a.src.reserve(source.size());
  a.dst.reserve(source.size());
  const double gate2 = max_distance * max_distance;
  for (const Point3& p : source) {
    const Point3 moved = t(p);
    const Neighbor nb = target.nearest(moved);
    const double d2 = nb.distance * nb.distance;
    if (d2 <= gate2) {
      a.src.push_back(p);
      a.dst.push_back(target.point(nb.index));
      a.truncated_sq_sum += d2;
    } else {
      a.truncated_sq_sum += gate2;
    }
  }
  return a;
}

}  // namespace detail

/// Point-to-point ICP with one-directional source->target association.
///
/// The reported RMSE is sqrt(mean(min(d_i^2, gate^2))) over all source
/// points, which equals the plain RMSE when no gate is set. The sequence of
/// RMSE values is non-increasing.
inline IcpResult icp_point_to_point(std::span<const Point3> source, const NNIndex& target,
                                    const RigidTransform& init, const IcpParams& params = {}) {
  if (source.empty()) throw DegenerateInput("icp source cloud is empty");
  const double n = static_cast<double>(source.size());

  IcpResult res;
  res.transform = init;
  detail::Association assoc = detail::associate(target, source, init, params.max_distance);
  double prev = std::sqrt(assoc.truncated_sq_sum / n);
  res.rmse = prev;
  res.rmse_history.push_back(prev);

  for (int it = 1; it <= params.max_iterations; ++it) {
    if (assoc.src.size() < 3) throw DegenerateInput("icp iteration produced fewer than 3 associations");
    const RigidTransform next = kabsch(assoc.src, assoc.dst);
    detail::Association next_assoc = detail::associate(target, source, next, params.max_distance);
    const double cur = std::sqrt(next_assoc.truncated_sq_sum / n);
    res.iterations = it;
    // Kabsch on a degenerate-but-accepted set can, in rare float cases, land
    // above the previous objective; keep the better transform.
    if (cur > prev) {
      res.rmse_history.push_back(prev);
      break;
    }
    res.transform = next;
    res.rmse = cur;
    res.rmse_history.push_back(cur);
    assoc = std::move(next_assoc);
    if (std::abs(prev - cur) < params.convergence_tol) break;
    prev = cur;
  }
  return res;
}

inline IcpResult icp_point_to_point(std::span<const Point3> source, std::span<const Point3> target,
                                    const RigidTransform& init, const IcpParams& params = {}) {
  if (target.empty()) throw DegenerateInput("icp target cloud is empty");
  const NNIndex index(target);
  return icp_point_to_point(source, index, init, params);
}

}  // namespace patchflow
