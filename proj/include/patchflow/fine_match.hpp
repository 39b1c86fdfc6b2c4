#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "patchflow/coarse/types.hpp"
#include "patchflow/dvf.hpp"
#include "patchflow/errors.hpp"
#include "patchflow/geometry/icp.hpp"
#include "patchflow/geometry/kabsch.hpp"
#include "patchflow/io/text.hpp"
#include "patchflow/partition/hierarchy.hpp"

namespace patchflow {

struct FineMatchParams {
  /// ICP association gate as a multiple of the mean scan resolution.
  double icp_gate_factor = 5.0;
  int icp_max_iterations = 30;
  double icp_convergence_tol = 1e-6;
};

struct PatchTransformEstimate {
  RigidTransform transform;
  RigidTransform kabsch;
  double kabsch_rmse = 0.0;
  double icp_rmse = 0.0;
};

/// Kabsch on the match support, refined by point-to-point ICP from the
/// support source points onto the support target points.
inline PatchTransformEstimate estimate_patch_transform(const PatchMatch& match, double resolution,
                                                       const FineMatchParams& params = {}) {
  const auto& s = match.support;
  PatchTransformEstimate e;
  try {
    e.kabsch = kabsch(s);
  } catch (const DegenerateInput& err) {
    throw DegenerateSupport("match " + std::to_string(match.source_patch_id) + "->" +
                            std::to_string(match.target_patch_id) + ": " + err.what());
  }
  e.kabsch_rmse = correspondence_rmse(e.kabsch, s.source, s.target);
  e.transform = e.kabsch;
  e.icp_rmse = e.kabsch_rmse;
  IcpParams ip;
  ip.max_iterations = params.icp_max_iterations;
  ip.convergence_tol = params.icp_convergence_tol;
  ip.max_distance = params.icp_gate_factor * resolution;
  try {
    const IcpResult r = icp_point_to_point(s.source, s.target, e.kabsch, ip);
    if (r.rmse <= e.kabsch_rmse) {
      e.transform = r.transform;
      e.icp_rmse = r.rmse;
    }
  } catch (const DegenerateInput&) {
    // Too few associations inside the gate; Kabsch stands.
  }
  return e;
}

struct PatchDisplacement {
  int level = 1;
  long patch_id = 0;
  RigidTransform transform;
  std::vector<PointIndex> point_ids;
  std::vector<Vec3> vectors;
};

/// R p + T - p for every point of the source patch.
inline PatchDisplacement patch_dvf(const Patch& patch, const RigidTransform& t, std::span<const Point3> pts) {
  PatchDisplacement d{patch.level, patch.patch_id, t, patch.point_indices, {}};
  d.vectors.reserve(patch.point_indices.size());
  for (PointIndex i : patch.point_indices) d.vectors.push_back(t(pts[i]) - pts[i]);
  return d;
}

inline void add_to_dvf(DisplacementVectorField& dvf, const PatchDisplacement& d, std::span<const Point3> pts,
                       Modality modality) {
  for (std::size_t k = 0; k < d.point_ids.size(); ++k)
    dvf.set(d.point_ids[k], {pts[d.point_ids[k]], d.vectors[k], d.level, d.patch_id, modality});
}

struct P2PPair {
  PointIndex source = 0;
  PointIndex target = 0;
  double distance = 0.0;
};

/// Nearest target-patch point of every transformed source-patch point,
/// kept when within `threshold`.
inline std::vector<P2PPair> extract_p2p(const Patch& src_patch, const Patch& tgt_patch, const RigidTransform& t,
                                        std::span<const Point3> src_pts, std::span<const Point3> tgt_pts,
                                        double threshold) {
  std::vector<P2PPair> out;
  if (tgt_patch.point_indices.empty()) return out;
  std::vector<Point3> tp;
  tp.reserve(tgt_patch.point_indices.size());
  for (PointIndex j : tgt_patch.point_indices) tp.push_back(tgt_pts[j]);
  const NNIndex index(tp);
  for (PointIndex i : src_patch.point_indices) {
    const Neighbor nb = index.nearest(t(src_pts[i]));
    if (nb.distance <= threshold) out.push_back({i, tgt_patch.point_indices[nb.index], nb.distance});
  }
  return out;
}

/// Per point, the entry of the finest level that holds it.
inline DisplacementVectorField integrate_levels(const std::array<const DisplacementVectorField*, 3>& levels) {
  DisplacementVectorField out;
  for (const DisplacementVectorField* l : levels) {
    if (!l) continue;
    for (const auto& [id, e] : *l)
      if (!out.contains(id)) out.set(id, e);
  }
  return out;
}

inline DisplacementVectorField integrate_levels(const DisplacementVectorField& l1, const DisplacementVectorField& l2,
                                                const DisplacementVectorField& l3) {
  return integrate_levels({&l1, &l2, &l3});
}

namespace io {

inline void write_p2p(const std::string& path, const std::vector<P2PPair>& pairs) {
  auto out = open_out(path);
  out << "src_index,tgt_index,distance\n";
  for (const auto& p : pairs) out << p.source << ',' << p.target << ',' << format_double(p.distance) << '\n';
}

}  // namespace io

}  // namespace patchflow
