#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "patchflow/coarse/projection.hpp"
#include "patchflow/coarse/types.hpp"
#include "patchflow/geometry/nn_index.hpp"
#include "patchflow/io/tables.hpp"

namespace patchflow {

namespace detail {

class ImageSpaceIndex {
 public:
  explicit ImageSpaceIndex(std::span<const Projection> proj) {
    for (std::size_t i = 0; i < proj.size(); ++i)
      if (proj[i].valid) {
        ids_.push_back(i);
        uv_.emplace_back(proj[i].u, proj[i].v, 0.0);
      }
    if (!uv_.empty()) index_.emplace(uv_);
  }

  /// Nearest valid projection within `r` pixels, or -1.
  long nearest(double u, double v, double r) const {
    if (!index_) return -1;
    const Neighbor nb = index_->knn(Point3(u, v, 0.0), 1).front();
    return nb.distance <= r ? static_cast<long>(ids_[nb.index]) : -1;
  }

 private:
  std::vector<std::size_t> ids_;
  std::vector<Point3> uv_;
  std::optional<NNIndex> index_;
};

}  // namespace detail

/// 3D point pairs behind pixel matches: each end takes the projected point
/// nearest in image space within `r_px`. A source point matched several
/// times keeps its most confident pair. Output is ordered by source index.
inline PointCorrespondenceSet lift_matches(const PixelMatchSet& pix, std::span<const Projection> src_proj,
                                           std::span<const Point3> src_pts, std::span<const Projection> tgt_proj,
                                           std::span<const Point3> tgt_pts, double r_px = 2.0) {
  const detail::ImageSpaceIndex si(src_proj), ti(tgt_proj);
  std::map<PointIndex, std::pair<PointIndex, double>> best;
  for (const PixelMatch& m : pix.matches) {
    const long s = si.nearest(m.u1, m.v1, r_px);
    if (s < 0) continue;
    const long t = ti.nearest(m.u2, m.v2, r_px);
    if (t < 0) continue;
    auto [it, fresh] = best.try_emplace(static_cast<PointIndex>(s), static_cast<PointIndex>(t), m.confidence);
    if (!fresh && m.confidence > it->second.second) it->second = {static_cast<PointIndex>(t), m.confidence};
  }
  PointCorrespondenceSet out;
  out.reserve(best.size());
  for (const auto& [s, tc] : best) out.add(src_pts[s], s, tgt_pts[tc.first], tc.first, tc.second);
  return out;
}

/// Merges lifted sets from several image pairs: the largest set is taken
/// whole, the others only contribute source points not matched yet.
inline PointCorrespondenceSet integrate_image_pairs(std::span<const PointCorrespondenceSet> sets) {
  std::vector<std::size_t> order(sets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return sets[a].size() > sets[b].size(); });
  std::map<PointIndex, std::pair<std::size_t, std::size_t>> chosen;
  for (std::size_t k : order)
    for (std::size_t i = 0; i < sets[k].size(); ++i) chosen.try_emplace(sets[k].source_indices[i], k, i);
  PointCorrespondenceSet out;
  out.reserve(chosen.size());
  for (const auto& [s, ki] : chosen) out.append_from(sets[ki.first], ki.second);
  return out;
}

inline PointCorrespondenceSet filter_by_max_displacement(const PointCorrespondenceSet& corrs, double d_max = 10.0) {
  PointCorrespondenceSet out;
  for (std::size_t i = 0; i < corrs.size(); ++i)
    if ((corrs.target[i] - corrs.source[i]).norm() <= d_max) out.append_from(corrs, i);
  return out;
}

/// Patch-to-patch matches by voting: each source patch takes the target
/// patch holding most of its matched points (then higher summed confidence,
/// then lower id). Labels are per-point patch ids, negative for unassigned.
inline MatchSet match_patches_2d(const PointCorrespondenceSet& corrs, std::span<const long> src_labels,
                                 std::span<const long> tgt_labels, int level) {
  struct Vote {
    std::size_t count = 0;
    double confidence = 0.0;
  };
  std::map<long, std::map<long, Vote>> votes;
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    const long s = src_labels[corrs.source_indices[i]];
    const long t = tgt_labels[corrs.target_indices[i]];
    if (s < 0 || t < 0) continue;
    Vote& v = votes[s][t];
    ++v.count;
    v.confidence += corrs.confidence[i];
  }
  MatchSet out;
  out.level = level;
  std::map<long, long> winner;
  for (const auto& [s, hist] : votes) {
    long best = -1;
    Vote bv;
    for (const auto& [t, v] : hist)
      if (best < 0 || v.count > bv.count || (v.count == bv.count && v.confidence > bv.confidence)) {
        best = t;
        bv = v;
      }
    winner[s] = best;
    PatchMatch m;
    m.level = level;
    m.source_patch_id = s;
    m.target_patch_id = best;
    m.modality = Modality::k2D;
    out.matches.push_back(std::move(m));
  }
  std::map<long, std::size_t> slot;
  for (std::size_t k = 0; k < out.matches.size(); ++k) slot[out.matches[k].source_patch_id] = k;
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    const long s = src_labels[corrs.source_indices[i]];
    const long t = tgt_labels[corrs.target_indices[i]];
    if (s >= 0 && t >= 0 && winner[s] == t) out.matches[slot[s]].support.append_from(corrs, i);
  }
  return out;
}

/// Keeps one match per target patch: the largest support wins, ties to the
/// lower source id. Output ordered by source id.
inline MatchSet enforce_injective(MatchSet set) {
  std::sort(set.matches.begin(), set.matches.end(),
            [](const PatchMatch& a, const PatchMatch& b) { return a.source_patch_id < b.source_patch_id; });
  std::map<long, std::size_t> owner;
  for (std::size_t k = 0; k < set.matches.size(); ++k) {
    auto [it, fresh] = owner.try_emplace(set.matches[k].target_patch_id, k);
    if (!fresh && set.matches[k].support.size() > set.matches[it->second].support.size()) it->second = k;
  }
  MatchSet out;
  out.level = set.level;
  for (std::size_t k = 0; k < set.matches.size(); ++k)
    if (owner[set.matches[k].target_patch_id] == k) out.matches.push_back(std::move(set.matches[k]));
  return out;
}

/// Union of the 3D and 2D matches of one level. A source patch present in
/// both keeps its 3D target, gaining the 2D support when the targets agree.
inline MatchSet merge_match_sets(const MatchSet& m3d, const MatchSet& m2d) {
  if (!m3d.empty() && !m2d.empty() && m3d.level != m2d.level)
    throw InvalidParams("cannot merge matches of levels " + std::to_string(m3d.level) + " and " +
                        std::to_string(m2d.level));
  MatchSet all;
  all.level = m3d.empty() ? m2d.level : m3d.level;
  std::unordered_map<long, std::size_t> by_source;
  for (const PatchMatch& m : m3d.matches) {
    by_source[m.source_patch_id] = all.matches.size();
    all.matches.push_back(m);
  }
  for (const PatchMatch& m : m2d.matches) {
    const auto it = by_source.find(m.source_patch_id);
    if (it == by_source.end()) {
      all.matches.push_back(m);
      continue;
    }
    PatchMatch& kept = all.matches[it->second];
    if (kept.target_patch_id == m.target_patch_id)
      for (std::size_t i = 0; i < m.support.size(); ++i) kept.support.append_from(m.support, i);
  }
  return enforce_injective(std::move(all));
}

}  // namespace patchflow
