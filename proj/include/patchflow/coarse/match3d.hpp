#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "patchflow/coarse/point_features.hpp"
#include "patchflow/coarse/types.hpp"
#include "patchflow/partition/hierarchy.hpp"

namespace patchflow {

struct AllowAll {
  bool operator()(std::size_t, std::size_t) const { return true; }
};

/// Pairs (i, j) where row j of `b` is the most similar (largest dot product)
/// to row i of `a` and vice versa, among pairs for which `allowed(i, j)`
/// holds. Ties go to the lower index.
template <class Allowed = AllowAll>
std::vector<std::pair<std::size_t, std::size_t>> mutual_nearest(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                                                 Allowed allowed = {}) {
  const Eigen::Index na = a.rows(), nb = b.rows();
  std::vector<std::pair<std::size_t, std::size_t>> out;
  if (na == 0 || nb == 0) return out;
  std::vector<Eigen::Index> best_b(static_cast<std::size_t>(na), 0), best_a(static_cast<std::size_t>(nb), 0);
  std::vector<double> sb(static_cast<std::size_t>(na), -std::numeric_limits<double>::infinity());
  std::vector<double> sa(static_cast<std::size_t>(nb), -std::numeric_limits<double>::infinity());
  constexpr Eigen::Index kBlock = 256;
  Eigen::MatrixXd sim;
  for (Eigen::Index r0 = 0; r0 < na; r0 += kBlock) {
    const Eigen::Index rows = std::min(kBlock, na - r0);
    sim.noalias() = a.middleRows(r0, rows) * b.transpose();
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < nb; ++c) {
        const double s = sim(r, c);
        const auto i = static_cast<std::size_t>(r0 + r), j = static_cast<std::size_t>(c);
        if (!allowed(i, j)) continue;
        if (s > sb[i]) {
          sb[i] = s;
          best_b[i] = c;
        }
        if (s > sa[j]) {
          sa[j] = s;
          best_a[j] = r0 + r;
        }
      }
  }
  for (Eigen::Index i = 0; i < na; ++i)
    if (sb[static_cast<std::size_t>(i)] > -std::numeric_limits<double>::infinity() &&
        best_a[static_cast<std::size_t>(best_b[static_cast<std::size_t>(i)])] == i)
      out.emplace_back(static_cast<std::size_t>(i), static_cast<std::size_t>(best_b[static_cast<std::size_t>(i)]));
  return out;
}

/// Mutual nearest neighbors between two lists of patch features; returns
/// positions into the lists.
template <class Allowed = AllowAll>
std::vector<std::pair<std::size_t, std::size_t>> match_patch_features(std::span<const PatchFeature> src,
                                                                      std::span<const PatchFeature> tgt,
                                                                      Allowed allowed = {}) {
  if (src.empty() || tgt.empty()) return {};
  const Eigen::Index d = src.front().vector.size();
  Eigen::MatrixXd a(static_cast<Eigen::Index>(src.size()), d), b(static_cast<Eigen::Index>(tgt.size()), d);
  for (std::size_t i = 0; i < src.size(); ++i) a.row(static_cast<Eigen::Index>(i)) = src[i].vector.transpose();
  for (std::size_t j = 0; j < tgt.size(); ++j) b.row(static_cast<Eigen::Index>(j)) = tgt[j].vector.transpose();
  return mutual_nearest(a, b, allowed);
}

struct Match3dOptions {
  /// Featured points per patch entering the support search; larger patches
  /// are thinned with a fixed stride.
  std::size_t max_support_candidates = 4096;
  const std::unordered_map<PointIndex, double>* source_weights = nullptr;
  const std::unordered_map<PointIndex, double>* target_weights = nullptr;
  /// Largest admissible displacement. Patch pairs whose centroids, and
  /// support pairs whose points, lie farther apart are never candidates.
  double max_displacement = std::numeric_limits<double>::infinity();
};

namespace detail {

struct PatchRows {
  std::vector<PointIndex> points;
  Eigen::MatrixXd descriptors;
};

inline PatchRows featured_rows(const Patch& p, const PointFeatureSet& feats, std::size_t cap) {
  std::vector<std::pair<PointIndex, long>> rows;
  for (PointIndex i : p.point_indices) {
    const long r = feats.row_of(i);
    if (r >= 0) rows.emplace_back(i, r);
  }
  if (cap > 0 && rows.size() > cap) {
    std::vector<std::pair<PointIndex, long>> thin;
    thin.reserve(cap);
    for (std::size_t k = 0; k < cap; ++k) thin.push_back(rows[k * rows.size() / cap]);
    rows.swap(thin);
  }
  PatchRows out;
  out.descriptors.resize(static_cast<Eigen::Index>(rows.size()), feats.dim());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    out.points.push_back(rows[k].first);
    out.descriptors.row(static_cast<Eigen::Index>(k)) = feats.descriptors.row(rows[k].second);
  }
  return out;
}

}  // namespace detail

/// 3D patch matches of one level: patches are paired by mutual nearest
/// aggregated feature, and each pair is supported by the mutual nearest
/// point-feature matches between the two patches' featured points. With a
/// finite `max_displacement`, both searches only consider pairs within it.
inline MatchSet match_patches_3d(int level, std::span<const Patch> src_patches, std::span<const Patch> tgt_patches,
                                 std::span<const Point3> src_pts, std::span<const Point3> tgt_pts,
                                 const PointFeatureSet& src_feats, const PointFeatureSet& tgt_feats,
                                 const Match3dOptions& opts = {}) {
  MatchSet out;
  out.level = level;
  std::vector<PatchFeature> sf, tf;
  std::vector<std::size_t> sp, tp;
  for (std::size_t i = 0; i < src_patches.size(); ++i) {
    try {
      sf.push_back(aggregate_patch_feature(src_patches[i], src_feats, opts.source_weights));
      sp.push_back(i);
    } catch (const EmptyPatchFeature&) {
    }
  }
  for (std::size_t j = 0; j < tgt_patches.size(); ++j) {
    try {
      tf.push_back(aggregate_patch_feature(tgt_patches[j], tgt_feats, opts.target_weights));
      tp.push_back(j);
    } catch (const EmptyPatchFeature&) {
    }
  }
  const double gate = opts.max_displacement;
  const bool gated = std::isfinite(gate);
  auto patches_near = [&](std::size_t a, std::size_t b) {
    return !gated || (src_patches[sp[a]].centroid - tgt_patches[tp[b]].centroid).norm() <= gate;
  };
  for (const auto& [a, b] : match_patch_features(sf, tf, patches_near)) {
    const Patch& ps = src_patches[sp[a]];
    const Patch& pt = tgt_patches[tp[b]];
    const auto rs = detail::featured_rows(ps, src_feats, opts.max_support_candidates);
    const auto rt = detail::featured_rows(pt, tgt_feats, opts.max_support_candidates);
    PatchMatch m;
    m.level = level;
    m.source_patch_id = ps.patch_id;
    m.target_patch_id = pt.patch_id;
    m.modality = Modality::k3D;
    auto points_near = [&](std::size_t i, std::size_t j) {
      return !gated || (src_pts[rs.points[i]] - tgt_pts[rt.points[j]]).norm() <= gate;
    };
    for (const auto& [i, j] : mutual_nearest(rs.descriptors, rt.descriptors, points_near)) {
      const double conf = std::clamp(rs.descriptors.row(static_cast<Eigen::Index>(i))
                                         .dot(rt.descriptors.row(static_cast<Eigen::Index>(j))),
                                     0.0, 1.0);
      m.support.add(src_pts[rs.points[i]], rs.points[i], tgt_pts[rt.points[j]], rt.points[j], conf);
    }
    if (!m.support.empty()) out.matches.push_back(std::move(m));
  }
  return out;
}

}  // namespace patchflow
