#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "patchflow/errors.hpp"
#include "patchflow/geometry/local_features.hpp"
#include "patchflow/io/text.hpp"
#include "patchflow/partition/cut_pursuit.hpp"

namespace patchflow {

struct Patch {
  int level = 1;
  long patch_id = 0;
  std::vector<PointIndex> point_indices;
  Point3 centroid = Point3::Zero();
};

/// Three independently solved partitions of one tile, coarser with level.
struct HierarchicalPartition {
  std::array<std::vector<Patch>, 3> levels;
  std::array<double, 3> regularization{0.0, 0.0, 0.0};
  /// Components of each level's solution before small patches are dropped.
  std::array<std::size_t, 3> component_counts{0, 0, 0};
  /// All feature vectors were identical; each level is the trivial partition.
  bool degenerate_features = false;

  const std::vector<Patch>& level(int l) const { return levels.at(static_cast<std::size_t>(l - 1)); }
  std::vector<Patch>& level(int l) { return levels.at(static_cast<std::size_t>(l - 1)); }

  /// Patch id of each of the `n` tile points at level `l`, -1 if unassigned.
  std::vector<long> labels(int l, std::size_t n) const {
    std::vector<long> out(n, -1);
    for (const Patch& p : level(l))
      for (PointIndex i : p.point_indices) out[i] = p.patch_id;
    return out;
  }
};

struct PartitionParams {
  /// Level regularization as multiples of the total feature variance.
  std::array<double, 3> lambda_factors{0.1, 0.5, 2.0};
  std::size_t k_adj = 10;
  std::size_t min_patch = 10;
  Neighborhood neighborhood{};
  int max_iterations = 50;
};

/// Per-point [linearity, planarity, curvature] and, with gray values in
/// [0,255], a fourth gray/255 channel.
inline FeatureMatrix partition_features(const LocalGeomFeatures& geo, std::span<const double> gray = {}) {
  const std::size_t n = geo.linearity.size();
  if (!gray.empty() && gray.size() != n) throw InvalidParams("gray channel size mismatch");
  FeatureMatrix f(static_cast<Eigen::Index>(n), gray.empty() ? 3 : 4);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    f(r, 0) = geo.linearity[i];
    f(r, 1) = geo.planarity[i];
    f(r, 2) = geo.curvature[i];
    if (!gray.empty()) f(r, 3) = gray[i] / 255.0;
  }
  return f;
}

/// Zero mean and unit variance per channel; constant channels become zero.
inline void standardize_features(FeatureMatrix& f) {
  if (f.rows() == 0) return;
  for (Eigen::Index c = 0; c < f.cols(); ++c) {
    const double mean = f.col(c).mean();
    f.col(c).array() -= mean;
    const double sd = std::sqrt(f.col(c).squaredNorm() / static_cast<double>(f.rows()));
    if (sd > 1e-12)
      f.col(c) /= sd;
    else
      f.col(c).setZero();
  }
}

/// Total variance: trace of the feature covariance.
inline double feature_variance(const FeatureMatrix& f) {
  if (f.rows() == 0 || f.cols() == 0) return 0.0;
  double v = 0.0;
  for (Eigen::Index c = 0; c < f.cols(); ++c) {
    const double mean = f.col(c).mean();
    v += (f.col(c).array() - mean).square().sum() / static_cast<double>(f.rows());
  }
  return v;
}

/// Drops patches with fewer than `min_patch` points; their points are left
/// without a patch at that level. Ids of kept patches are unchanged.
inline HierarchicalPartition filter_small_patches(HierarchicalPartition part, std::size_t min_patch = 10) {
  for (auto& lvl : part.levels)
    std::erase_if(lvl, [&](const Patch& p) { return p.point_indices.size() < min_patch; });
  return part;
}

/// One cut-pursuit solve per level with absolute regularization `lambdas`;
/// connected components of each solution become patches.
inline HierarchicalPartition hierarchical_partition(std::span<const Point3> pts, const FeatureMatrix& feats,
                                                    const AdjacencyGraph& graph, const std::array<double, 3>& lambdas,
                                                    std::size_t min_patch = 10, int max_iterations = 50) {
  if (!(lambdas[0] < lambdas[1] && lambdas[1] < lambdas[2])) throw InvalidParams("lambdas must increase with level");
  if (static_cast<std::size_t>(feats.rows()) != pts.size()) throw InvalidParams("one feature vector per point required");
  HierarchicalPartition part;
  part.regularization = lambdas;
  if (pts.empty()) return part;
  part.degenerate_features = (feats.rowwise() - feats.row(0)).cwiseAbs().maxCoeff() == 0.0;
  for (int l = 1; l <= 3; ++l) {
    CutPursuitParams cp;
    cp.lambda = lambdas[static_cast<std::size_t>(l - 1)];
    cp.max_iterations = max_iterations;
    const CutPursuitResult r = l0_cut_pursuit(feats, graph, cp);
    part.component_counts[static_cast<std::size_t>(l - 1)] = r.component_count();
    std::vector<Patch> patches(r.component_count());
    for (std::size_t i = 0; i < pts.size(); ++i) patches[r.component[i]].point_indices.push_back(i);
    auto& out = part.level(l);
    for (Patch& p : patches) {
      if (p.point_indices.size() < min_patch) continue;
      p.level = l;
      p.patch_id = static_cast<long>(out.size());
      for (PointIndex i : p.point_indices) p.centroid += pts[i];
      p.centroid /= static_cast<double>(p.point_indices.size());
      out.push_back(std::move(p));
    }
  }
  return part;
}

/// Features, adjacency graph and regularization derived from the tile
/// itself, then hierarchical_partition. `gray` is optional, in [0,255].
inline HierarchicalPartition partition_tile(std::span<const Point3> pts, std::span<const double> gray = {},
                                            const PartitionParams& params = {}) {
  if (pts.empty()) return {};
  const NNIndex index(pts);
  FeatureOptions fo;
  fo.neighborhood = params.neighborhood;
  FeatureMatrix f = partition_features(local_covariance_features_at(index, pts, fo), gray);
  standardize_features(f);
  const double var = feature_variance(f);
  const double scale = var > 0.0 ? var : 1.0;
  std::array<double, 3> lambdas{};
  for (std::size_t l = 0; l < 3; ++l) lambdas[l] = params.lambda_factors[l] * scale;
  return hierarchical_partition(pts, f, build_adjacency_graph(index, params.k_adj), lambdas, params.min_patch,
                                params.max_iterations);
}

namespace io {

/// point_index,level,patch_id for every assigned point; `index_map` maps
/// tile-local indices to cloud indices when given.
inline void write_patch_labels(const std::string& path, const HierarchicalPartition& part,
                               std::span<const PointIndex> index_map = {}) {
  auto out = open_out(path);
  out << "point_index,level,patch_id\n";
  for (int l = 1; l <= 3; ++l)
    for (const Patch& p : part.level(l))
      for (PointIndex i : p.point_indices)
        out << (index_map.empty() ? i : index_map[i]) << ',' << l << ',' << p.patch_id << '\n';
}

}  // namespace io
}  // namespace patchflow
