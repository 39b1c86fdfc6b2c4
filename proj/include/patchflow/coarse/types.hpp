#pragma once

#include <map>
#include <vector>

#include <Eigen/Core>

#include "patchflow/dvf.hpp"
#include "patchflow/geometry/types.hpp"

namespace patchflow {

/// Unit-norm descriptor summarizing one patch.
struct PatchFeature {
  long patch_id = 0;
  int level = 1;
  Eigen::VectorXd vector;
};

/// A source patch paired with a target patch, with the point pairs that
/// support it. Indices in `support` are tile-local.
struct PatchMatch {
  int level = 1;
  long source_patch_id = 0;
  long target_patch_id = 0;
  Modality modality = Modality::k3D;
  PointCorrespondenceSet support;
};

/// Matches of one hierarchy level; injective from source to target patches.
struct MatchSet {
  int level = 1;
  std::vector<PatchMatch> matches;

  std::size_t size() const { return matches.size(); }
  bool empty() const { return matches.empty(); }

  bool is_injective() const {
    std::map<long, int> src, tgt;
    for (const auto& m : matches)
      if (++src[m.source_patch_id] > 1 || ++tgt[m.target_patch_id] > 1) return false;
    return true;
  }
};

}  // namespace patchflow
