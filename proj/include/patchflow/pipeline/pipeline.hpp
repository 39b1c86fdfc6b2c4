#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "patchflow/coarse/match2d.hpp"
#include "patchflow/coarse/match3d.hpp"
#include "patchflow/coarse/ncc.hpp"
#include "patchflow/coarse/point_features.hpp"
#include "patchflow/coarse/projection.hpp"
#include "patchflow/dvf.hpp"
#include "patchflow/errors.hpp"
#include "patchflow/fine_match.hpp"
#include "patchflow/io/camera.hpp"
#include "patchflow/io/point_cloud.hpp"
#include "patchflow/io/raster.hpp"
#include "patchflow/io/tables.hpp"
#include "patchflow/parallel.hpp"
#include "patchflow/partition/hierarchy.hpp"
#include "patchflow/pipeline/config.hpp"
#include "patchflow/refinement.hpp"
#include "patchflow/tiling.hpp"

namespace patchflow {

/// Loaded inputs of one run. Images are keyed by image id.
struct PipelineInputs {
  PointCloud source;
  PointCloud target;
  std::vector<CameraModel> source_cameras;
  std::vector<CameraModel> target_cameras;
  std::map<std::string, Raster> source_images;
  std::map<std::string, Raster> target_images;
  std::optional<PointFeatureSet> source_features;
  std::optional<PointFeatureSet> target_features;
  std::optional<std::unordered_map<PointIndex, double>> source_attention;
  std::optional<std::unordered_map<PointIndex, double>> target_attention;
  std::vector<PixelMatchSet> pixel_matches;
};

/// Seconds spent per stage, summed over tiles (so parallel stages may exceed
/// wall time), plus the wall time of the whole run.
struct StageTimings {
  std::vector<std::pair<std::string, double>> seconds;
  double wall = 0.0;

  void add(const std::string& stage, double s) {
    for (auto& [k, v] : seconds)
      if (k == stage) {
        v += s;
        return;
      }
    seconds.emplace_back(stage, s);
  }

  double get(const std::string& stage) const {
    for (const auto& [k, v] : seconds)
      if (k == stage) return v;
    return 0.0;
  }
};

struct TileSummary {
  int pair_id = 0;
  std::size_t source_points = 0;
  std::size_t target_points = 0;
  double resolution = 0.0;
  std::array<std::size_t, 3> patches{0, 0, 0};
  std::array<std::size_t, 3> matches_3d{0, 0, 0};
  std::array<std::size_t, 3> matches_2d{0, 0, 0};
  std::array<std::size_t, 3> accepted{0, 0, 0};
  std::array<std::size_t, 3> estimated{0, 0, 0};
  bool resumed = false;
};

struct PipelineResult {
  /// Integrated field keyed by source cloud index.
  DisplacementVectorField dvf;
  /// Per-level fields before integration, keyed by source cloud index.
  std::array<DisplacementVectorField, 3> levels;
  std::vector<MatchQualityReport> reports;
  std::vector<P2PPair> p2p;
  std::vector<TileSummary> tiles;
  StageTimings timings;
  /// Mean scan resolution of the source cloud.
  double resolution = 0.0;
};

namespace detail {

inline std::string find_image_file(const std::string& dir, const std::string& id) {
  for (const char* ext : {".pgm", ".ppm", ".PGM", ".PPM"}) {
    const auto path = std::filesystem::path(dir) / (id + ext);
    if (std::filesystem::exists(path)) return path.string();
  }
  throw SchemaError("image", "no image file for '" + id + "' in '" + dir + "'");
}

inline std::map<std::string, Raster> load_images(const std::string& dir, const std::vector<CameraModel>& cams) {
  std::map<std::string, Raster> out;
  for (const auto& c : cams) {
    Raster r = io::load_raster(find_image_file(dir, c.image_id), c.image_id);
    if (r.width != c.width || r.height != c.height)
      throw SchemaError("image", "image '" + c.image_id + "' size differs from its camera");
    out.emplace(c.image_id, std::move(r));
  }
  return out;
}

}  // namespace detail

/// Reads every input the configuration enables. Camera files are only read
/// when 2D matching is on, so a missing camera file does not matter to a
/// 3D-only run.
inline PipelineInputs load_pipeline_inputs(const PipelineConfig& c) {
  c.validate_paths();
  const auto& in = c.inputs;
  if (c.coarse.use_2d)
    for (const auto* path : {&in.source_cameras, &in.target_cameras})
      if (!std::filesystem::exists(*path)) throw ConfigError("coarse.use_2d: camera file '" + *path + "' not found");
  PipelineInputs out;
  out.source = io::load_point_cloud(in.source);
  out.target = io::load_point_cloud(in.target);
  if (!in.source_georeference.empty())
    out.source = apply_georeference(out.source, io::load_transform(in.source_georeference));
  if (!in.target_georeference.empty())
    out.target = apply_georeference(out.target, io::load_transform(in.target_georeference));
  if (c.coarse.use_2d) {
    out.source_cameras = io::load_camera(in.source_cameras);
    out.target_cameras = io::load_camera(in.target_cameras);
    if (c.coarse.matcher == "import") {
      out.pixel_matches = io::load_pixel_matches(in.pixel_matches);
    } else {
      out.source_images = detail::load_images(in.source_images, out.source_cameras);
      out.target_images = detail::load_images(in.target_images, out.target_cameras);
    }
  }
  if (c.coarse.use_3d && c.coarse.feature_provider == "import") {
    out.source_features = io::load_point_features(in.source_features);
    out.target_features = io::load_point_features(in.target_features);
  }
  if (!in.source_attention.empty()) out.source_attention = io::load_attention_weights(in.source_attention);
  if (!in.target_attention.empty()) out.target_attention = io::load_attention_weights(in.target_attention);
  return out;
}

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

template <class Fn>
auto staged(const char* stage, int pair_id, Fn&& fn) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, pair_id, e.what());
  }
}

inline std::vector<Point3> gather(const std::vector<Point3>& pts, std::span<const PointIndex> ids) {
  std::vector<Point3> out;
  out.reserve(ids.size());
  for (PointIndex i : ids) out.push_back(pts[i]);
  return out;
}

/// Gray value per tile point: cloud colors when present, otherwise the
/// image sampled at each point's projection (unseen points take the mean).
inline std::vector<double> tile_gray(const PointCloud& cloud, std::span<const PointIndex> ids,
                                     const std::vector<Point3>& pts, const CameraModel* cam, const Raster* image) {
  std::vector<double> g;
  if (cloud.has_color()) {
    g.reserve(ids.size());
    for (PointIndex i : ids) g.push_back(cloud.gray(i));
    return g;
  }
  if (!cam || !image) return g;
  g.assign(pts.size(), -1.0);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const Projection p = project_point(pts[i], *cam);
    if (!p.valid) continue;
    const int u = std::clamp(static_cast<int>(std::lround(p.u)), 0, image->width - 1);
    const int v = std::clamp(static_cast<int>(std::lround(p.v)), 0, image->height - 1);
    g[i] = image->gray(u, v);
    sum += g[i];
    ++n;
  }
  if (n == 0) return {};
  for (double& x : g)
    if (x < 0.0) x = sum / static_cast<double>(n);
  return g;
}

inline const CameraModel* find_camera(const std::vector<CameraModel>& cams, const std::string& id) {
  for (const auto& c : cams)
    if (c.image_id == id) return &c;
  return nullptr;
}

using ImagePair = std::pair<std::string, std::string>;

/// Coarse matching output of one tile; what a checkpoint stores.
struct CoarseState {
  HierarchicalPartition source_partition;
  HierarchicalPartition target_partition;
  double resolution = 0.0;
  std::array<MatchSet, 3> merged;
  std::array<std::size_t, 3> n3d{0, 0, 0};
  std::array<std::size_t, 3> n2d{0, 0, 0};
};

inline nlohmann::json partition_to_json(const HierarchicalPartition& p) {
  nlohmann::json j = nlohmann::json::array();
  for (int l = 1; l <= 3; ++l) {
    nlohmann::json lv = nlohmann::json::array();
    for (const Patch& patch : p.level(l)) lv.push_back({{"id", patch.patch_id}, {"points", patch.point_indices}});
    j.push_back(std::move(lv));
  }
  return j;
}

inline HierarchicalPartition partition_from_json(const nlohmann::json& j, const std::vector<Point3>& pts) {
  HierarchicalPartition p;
  for (int l = 1; l <= 3; ++l)
    for (const auto& e : j.at(static_cast<std::size_t>(l - 1))) {
      Patch patch;
      patch.level = l;
      patch.patch_id = e.at("id").get<long>();
      patch.point_indices = e.at("points").get<std::vector<PointIndex>>();
      for (PointIndex i : patch.point_indices) {
        if (i >= pts.size()) throw SchemaError("checkpoint", "patch index out of range");
        patch.centroid += pts[i];
      }
      if (!patch.point_indices.empty()) patch.centroid /= static_cast<double>(patch.point_indices.size());
      p.level(l).push_back(std::move(patch));
    }
  return p;
}

inline void write_checkpoint(const std::string& path, const CoarseState& s, std::size_t n_src, std::size_t n_tgt) {
  nlohmann::json j;
  j["source_points"] = n_src;
  j["target_points"] = n_tgt;
  j["resolution"] = s.resolution;
  j["source_partition"] = partition_to_json(s.source_partition);
  j["target_partition"] = partition_to_json(s.target_partition);
  j["n3d"] = s.n3d;
  j["n2d"] = s.n2d;
  nlohmann::json levels = nlohmann::json::array();
  for (const MatchSet& ms : s.merged) {
    nlohmann::json lv = nlohmann::json::array();
    for (const PatchMatch& m : ms.matches)
      lv.push_back({{"source", m.source_patch_id},
                    {"target", m.target_patch_id},
                    {"modality", to_string(m.modality)},
                    {"source_indices", m.support.source_indices},
                    {"target_indices", m.support.target_indices},
                    {"confidence", m.support.confidence}});
    levels.push_back(std::move(lv));
  }
  j["matches"] = std::move(levels);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw ParseError(tmp, 0, "cannot open for writing");
    out << j.dump();
  }
  std::filesystem::rename(tmp, path);
}

inline std::optional<CoarseState> read_checkpoint(const std::string& path, const std::vector<Point3>& src,
                                                  const std::vector<Point3>& tgt) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  const nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw SchemaError("checkpoint", "'" + path + "' is not valid JSON");
  try {
    if (j.at("source_points").get<std::size_t>() != src.size() ||
        j.at("target_points").get<std::size_t>() != tgt.size())
      throw SchemaError("checkpoint", "'" + path + "' belongs to different tile contents");
    CoarseState s;
    s.resolution = j.at("resolution").get<double>();
    s.source_partition = partition_from_json(j.at("source_partition"), src);
    s.target_partition = partition_from_json(j.at("target_partition"), tgt);
    s.n3d = j.at("n3d").get<std::array<std::size_t, 3>>();
    s.n2d = j.at("n2d").get<std::array<std::size_t, 3>>();
    for (int l = 1; l <= 3; ++l) {
      MatchSet& ms = s.merged[static_cast<std::size_t>(l - 1)];
      ms.level = l;
      for (const auto& e : j.at("matches").at(static_cast<std::size_t>(l - 1))) {
        PatchMatch m;
        m.level = l;
        m.source_patch_id = e.at("source").get<long>();
        m.target_patch_id = e.at("target").get<long>();
        m.modality = modality_from_string(e.at("modality").get<std::string>());
        const auto si = e.at("source_indices").get<std::vector<PointIndex>>();
        const auto ti = e.at("target_indices").get<std::vector<PointIndex>>();
        const auto cf = e.at("confidence").get<std::vector<double>>();
        if (si.size() != ti.size() || si.size() != cf.size()) throw SchemaError("checkpoint", "ragged match support");
        for (std::size_t k = 0; k < si.size(); ++k) {
          if (si[k] >= src.size() || ti[k] >= tgt.size()) throw SchemaError("checkpoint", "support index out of range");
          m.support.add(src[si[k]], si[k], tgt[ti[k]], ti[k], cf[k]);
        }
        ms.matches.push_back(std::move(m));
      }
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("checkpoint", "'" + path + "': " + e.what());
  }
}

inline std::string checkpoint_path(const std::string& out_dir, int pair_id) {
  return (std::filesystem::path(out_dir) / "checkpoint" / ("tile_" + std::to_string(pair_id) + ".json")).string();
}

struct TileOutput {
  TileSummary summary;
  std::array<DisplacementVectorField, 3> levels;
  std::vector<MatchQualityReport> reports;
  std::vector<P2PPair> p2p;
  StageTimings timings;
};

class PipelineRunner {
 public:
  PipelineRunner(const PipelineConfig& config, const PipelineInputs& inputs) : c_(config), in_(inputs) {}

  PipelineResult run() {
    const auto t_run = Clock::now();
    PipelineResult result;
    auto t0 = Clock::now();
    const std::vector<TilePair> tiles = staged("tiling", -1, [&] {
      return tile_pair(in_.source, in_.target, c_.tiling.max_points, c_.tiling.overlap_margin);
    });
    result.timings.add("tiling", seconds_since(t0));
    spdlog::info("{} tile pair(s)", tiles.size());

    std::vector<std::vector<ImagePair>> tile_images(tiles.size());
    if (c_.coarse.use_2d) {
      t0 = Clock::now();
      prepare_pixel_matches(tiles, tile_images);
      result.timings.add("pixel_matching", seconds_since(t0));
    }

    std::vector<TileOutput> outputs(tiles.size());
    const std::size_t threads = resolve_threads(c_.runtime.threads);
    // Tiles run one after another when there are fewer tiles than workers so
    // that the inner stages get the workers instead.
    const std::size_t outer = tiles.size() >= threads ? threads : 1;
    inner_threads_ = outer == 1 ? threads : 1;
    parallel_for(tiles.size(), outer, [&](std::size_t t) { outputs[t] = process_tile(tiles[t], tile_images[t]); });

    t0 = Clock::now();
    for (std::size_t t = 0; t < tiles.size(); ++t) {
      TileOutput& o = outputs[t];
      const auto& ids = tiles[t].source.point_indices;
      for (int l = 0; l < 3; ++l)
        for (const auto& [local, e] : o.levels[static_cast<std::size_t>(l)])
          result.levels[static_cast<std::size_t>(l)].set(ids[local], e);
      for (auto& r : o.reports) result.reports.push_back(r);
      const auto& tids = tiles[t].target.point_indices;
      for (auto& p : o.p2p) result.p2p.push_back({ids[p.source], tids[p.target], p.distance});
      for (const auto& [k, v] : o.timings.seconds) result.timings.add(k, v);
      result.tiles.push_back(o.summary);
    }
    result.dvf = integrate_levels(result.levels[0], result.levels[1], result.levels[2]);
    result.timings.add("integrate", seconds_since(t0));
    result.resolution = mean_scan_resolution(in_.source.points);
    result.timings.wall = seconds_since(t_run);
    return result;
  }

 private:
  const PipelineConfig& c_;
  const PipelineInputs& in_;
  std::size_t inner_threads_ = 1;
  std::map<ImagePair, PixelMatchSet> pixel_cache_;

  NccParams ncc_params() const {
    NccParams p;
    p.stride = c_.coarse.ncc_stride;
    p.template_radius = c_.coarse.ncc_template_radius;
    p.search_window = c_.coarse.ncc_search_window;
    p.min_conf = c_.coarse.ncc_min_conf;
    return p;
  }

  /// Chooses the images of every tile and matches each distinct image pair
  /// once.
  void prepare_pixel_matches(const std::vector<TilePair>& tiles, std::vector<std::vector<ImagePair>>& tile_images) {
    std::map<ImagePair, int> needed;
    for (std::size_t t = 0; t < tiles.size(); ++t) {
      const int id = tiles[t].pair_id;
      staged("coarse_2d", id, [&] {
        const auto src = gather(in_.source.points, tiles[t].source.point_indices);
        const auto tgt = gather(in_.target.points, tiles[t].target.point_indices);
        std::vector<std::string> si, ti;
        try {
          si = select_top_k_images(src, in_.source_cameras, c_.coarse.k_images);
          ti = select_top_k_images(tgt, in_.target_cameras, c_.coarse.k_images);
        } catch (const NoVisibleImage& e) {
          spdlog::warn("tile {}: {}; 2D matching skipped", id, e.what());
          return 0;
        }
        for (const auto& a : si)
          for (const auto& b : ti) {
            tile_images[t].emplace_back(a, b);
            needed.emplace(ImagePair{a, b}, id);
          }
        return 0;
      });
    }
    std::vector<ImagePair> pairs;
    for (const auto& [k, v] : needed) pairs.push_back(k);
    std::vector<PixelMatchSet> sets(pairs.size());
    if (c_.coarse.matcher == "import") {
      for (std::size_t k = 0; k < pairs.size(); ++k) {
        sets[k].source_image = pairs[k].first;
        sets[k].target_image = pairs[k].second;
        for (const auto& s : in_.pixel_matches)
          if (s.source_image == pairs[k].first && s.target_image == pairs[k].second)
            sets[k].matches.insert(sets[k].matches.end(), s.matches.begin(), s.matches.end());
      }
    } else {
      const NccParams np = ncc_params();
      parallel_for(pairs.size(), c_.runtime.threads, [&](std::size_t k) {
        staged("coarse_2d", needed.at(pairs[k]), [&] {
          sets[k] = match_pixels(in_.source_images.at(pairs[k].first), in_.target_images.at(pairs[k].second), np);
          return 0;
        });
      });
    }
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      spdlog::info("pixel matches {} -> {}: {}", pairs[k].first, pairs[k].second, sets[k].matches.size());
      pixel_cache_.emplace(pairs[k], std::move(sets[k]));
    }
  }

  CoarseState coarse(const TilePair& tp, const std::vector<ImagePair>& images, const std::vector<Point3>& src,
                     const std::vector<Point3>& tgt, StageTimings& timings) {
    const int id = tp.pair_id;
    CoarseState s;
    auto t0 = Clock::now();
    s.resolution = staged("partition", id, [&] { return mean_scan_resolution(src); });
    PartitionParams pp;
    pp.lambda_factors = c_.partition.lambda_factors;
    pp.k_adj = c_.partition.k_adj;
    pp.neighborhood.k = c_.partition.k_features;
    pp.min_patch = c_.partition.min_patch;
    pp.max_iterations = c_.partition.max_iterations;
    std::vector<double> gs, gt;
    if (c_.partition.use_gray) {
      const CameraModel* sc = nullptr;
      const CameraModel* tc = nullptr;
      const Raster* si = nullptr;
      const Raster* ti = nullptr;
      if (!images.empty()) {
        sc = find_camera(in_.source_cameras, images.front().first);
        tc = find_camera(in_.target_cameras, images.front().second);
        const auto a = in_.source_images.find(images.front().first);
        const auto b = in_.target_images.find(images.front().second);
        if (a != in_.source_images.end()) si = &a->second;
        if (b != in_.target_images.end()) ti = &b->second;
      }
      gs = tile_gray(in_.source, tp.source.point_indices, src, sc, si);
      gt = tile_gray(in_.target, tp.target.point_indices, tgt, tc, ti);
      if (gs.empty() || gt.empty()) gs.clear(), gt.clear();
    }
    staged("partition", id, [&] {
      parallel_for(2, inner_threads_, [&](std::size_t k) {
        if (k == 0) s.source_partition = partition_tile(src, gs, pp);
        else s.target_partition = partition_tile(tgt, gt, pp);
      });
      return 0;
    });
    timings.add("partition", seconds_since(t0));

    std::array<MatchSet, 3> m3d, m2d;
    if (c_.coarse.use_3d) {
      t0 = Clock::now();
      staged("coarse_3d", id, [&] {
        const double tgt_res = mean_scan_resolution(tgt);
        const auto ds = adaptive_downsample(src, c_.coarse.voxel_factor, s.resolution);
        const auto dt = adaptive_downsample(tgt, c_.coarse.voxel_factor, tgt_res);
        PointFeatureSet fs, ft;
        if (c_.coarse.feature_provider == "import") {
          fs = select_imported_features(*in_.source_features, ds.indices, tp.source.point_indices);
          ft = select_imported_features(*in_.target_features, dt.indices, tp.target.point_indices);
        } else {
          FpfhOptions fo;
          fo.radius_factor = c_.coarse.fpfh_radius_factor;
          parallel_for(2, inner_threads_, [&](std::size_t k) {
            if (k == 0) fs = fpfh_features(src, ds.indices, s.resolution, fo);
            else ft = fpfh_features(tgt, dt.indices, tgt_res, fo);
          });
        }
        // Attention weights are keyed by cloud index; re-key to tile indices.
        std::unordered_map<PointIndex, double> ws, wt;
        if (in_.source_attention)
          for (std::size_t i = 0; i < tp.source.point_indices.size(); ++i)
            if (auto it = in_.source_attention->find(tp.source.point_indices[i]); it != in_.source_attention->end())
              ws.emplace(i, it->second);
        if (in_.target_attention)
          for (std::size_t i = 0; i < tp.target.point_indices.size(); ++i)
            if (auto it = in_.target_attention->find(tp.target.point_indices[i]); it != in_.target_attention->end())
              wt.emplace(i, it->second);
        Match3dOptions mo;
        mo.max_support_candidates = c_.coarse.max_support_candidates;
        mo.max_displacement = c_.coarse.d_max;
        if (in_.source_attention) mo.source_weights = &ws;
        if (in_.target_attention) mo.target_weights = &wt;
        parallel_for(3, inner_threads_, [&](std::size_t l) {
          const int level = static_cast<int>(l) + 1;
          m3d[l] = match_patches_3d(level, s.source_partition.level(level), s.target_partition.level(level), src, tgt,
                                    fs, ft, mo);
        });
        return 0;
      });
      timings.add("coarse_3d", seconds_since(t0));
    }
    if (c_.coarse.use_2d && !images.empty()) {
      t0 = Clock::now();
      staged("coarse_2d", id, [&] {
        std::vector<PointCorrespondenceSet> lifted;
        for (const auto& pair : images) {
          const PixelMatchSet& pix = pixel_cache_.at(pair);
          const CameraModel* sc = find_camera(in_.source_cameras, pair.first);
          const CameraModel* tc = find_camera(in_.target_cameras, pair.second);
          if (!sc || !tc) throw SchemaError("camera", "no camera for image pair " + pair.first + " / " + pair.second);
          auto sp = project_to_image(src, *sc);
          auto tpj = project_to_image(tgt, *tc);
          remove_occluded(sp, *sc, c_.coarse.occlusion_cell_px);
          remove_occluded(tpj, *tc, c_.coarse.occlusion_cell_px);
          lifted.push_back(lift_matches(pix, sp, src, tpj, tgt, c_.coarse.r_px));
        }
        const PointCorrespondenceSet corrs =
            filter_by_max_displacement(integrate_image_pairs(lifted), c_.coarse.d_max);
        for (int l = 1; l <= 3; ++l) {
          const auto sl = s.source_partition.labels(l, src.size());
          const auto tl = s.target_partition.labels(l, tgt.size());
          m2d[static_cast<std::size_t>(l - 1)] = match_patches_2d(corrs, sl, tl, l);
        }
        return 0;
      });
      timings.add("coarse_2d", seconds_since(t0));
    }
    for (std::size_t l = 0; l < 3; ++l) {
      m3d[l].level = m2d[l].level = static_cast<int>(l) + 1;
      s.n3d[l] = m3d[l].size();
      s.n2d[l] = m2d[l].size();
      s.merged[l] = merge_match_sets(m3d[l], m2d[l]);
    }
    return s;
  }

  TileOutput process_tile(const TilePair& tp, const std::vector<ImagePair>& images) {
    const int id = tp.pair_id;
    TileOutput out;
    out.summary.pair_id = id;
    const auto src = gather(in_.source.points, tp.source.point_indices);
    const auto tgt = gather(in_.target.points, tp.target.point_indices);
    out.summary.source_points = src.size();
    out.summary.target_points = tgt.size();
    if (src.empty() || tgt.size() < 3) {
      spdlog::warn("tile {}: too few points, skipped", id);
      return out;
    }

    std::optional<CoarseState> state;
    const std::string ckpt = checkpoint_path(c_.output_dir, id);
    if (c_.runtime.resume) {
      state = staged("checkpoint", id, [&] { return read_checkpoint(ckpt, src, tgt); });
      out.summary.resumed = state.has_value();
    }
    if (!state) {
      state = coarse(tp, images, src, tgt, out.timings);
      if (c_.runtime.checkpoint)
        staged("checkpoint", id, [&] {
          std::filesystem::create_directories(std::filesystem::path(ckpt).parent_path());
          write_checkpoint(ckpt, *state, src.size(), tgt.size());
          return 0;
        });
    }
    out.summary.resolution = state->resolution;
    for (std::size_t l = 0; l < 3; ++l) {
      out.summary.patches[l] = state->source_partition.levels[l].size();
      out.summary.matches_3d[l] = state->n3d[l];
      out.summary.matches_2d[l] = state->n2d[l];
    }

    auto t0 = Clock::now();
    RefinementCriteria rc;
    rc.delta1 = c_.refinement.delta1;
    rc.delta2 = c_.refinement.delta2;
    rc.max_support = c_.refinement.max_support;
    std::array<MatchSet, 3> accepted;
    staged("refinement", id, [&] {
      for (std::size_t l = 0; l < 3; ++l) {
        RefinementResult r = refine(state->merged[l], rc);
        accepted[l] = std::move(r.accepted);
        out.summary.accepted[l] = accepted[l].size();
        out.reports.insert(out.reports.end(), r.reports.begin(), r.reports.end());
      }
      return 0;
    });
    out.timings.add("refinement", seconds_since(t0));

    t0 = Clock::now();
    FineMatchParams fp;
    fp.icp_gate_factor = c_.fine.icp_gate_factor;
    fp.icp_max_iterations = c_.fine.icp_max_iterations;
    fp.icp_convergence_tol = c_.fine.icp_convergence_tol;
    staged("fine", id, [&] {
      for (std::size_t l = 0; l < 3; ++l) {
        const int level = static_cast<int>(l) + 1;
        std::map<long, const Patch*> sp, tpch;
        for (const Patch& p : state->source_partition.level(level)) sp[p.patch_id] = &p;
        for (const Patch& p : state->target_partition.level(level)) tpch[p.patch_id] = &p;
        const auto& ms = accepted[l].matches;
        std::vector<std::optional<PatchDisplacement>> disp(ms.size());
        std::vector<std::vector<P2PPair>> pairs(ms.size());
        parallel_for(ms.size(), inner_threads_, [&](std::size_t k) {
          const PatchMatch& m = ms[k];
          const auto it = sp.find(m.source_patch_id);
          if (it == sp.end()) return;
          PatchTransformEstimate e;
          try {
            e = estimate_patch_transform(m, state->resolution, fp);
          } catch (const DegenerateSupport&) {
            return;
          }
          disp[k] = patch_dvf(*it->second, e.transform, src);
          if (c_.fine.write_p2p)
            if (const auto jt = tpch.find(m.target_patch_id); jt != tpch.end())
              pairs[k] = extract_p2p(*it->second, *jt->second, e.transform, src, tgt,
                                     c_.fine.p2p_threshold_factor * state->resolution);
        });
        for (std::size_t k = 0; k < ms.size(); ++k) {
          if (!disp[k]) continue;
          ++out.summary.estimated[l];
          add_to_dvf(out.levels[l], *disp[k], src, ms[k].modality);
          out.p2p.insert(out.p2p.end(), pairs[k].begin(), pairs[k].end());
        }
      }
      return 0;
    });
    out.timings.add("fine", seconds_since(t0));
    spdlog::info("tile {}: {} source / {} target points, accepted {}/{}/{} matches", id, src.size(), tgt.size(),
                 out.summary.accepted[0], out.summary.accepted[1], out.summary.accepted[2]);
    return out;
  }
};

}  // namespace detail

/// Tiling, partition, coarse matching, refinement, fine matching and level
/// integration over already loaded inputs. Nothing is written except
/// checkpoints when enabled.
inline PipelineResult run_pipeline(const PipelineConfig& config, const PipelineInputs& inputs) {
  config.validate();
  if (config.coarse.use_2d && (inputs.source_cameras.empty() || inputs.target_cameras.empty()))
    throw ConfigError("coarse.use_2d: 2D matching needs cameras for both epochs");
  if (config.coarse.use_2d && config.coarse.matcher == "builtin" &&
      (inputs.source_images.empty() || inputs.target_images.empty()))
    throw ConfigError("coarse.use_2d: the builtin matcher needs images for both epochs");
  if (config.coarse.use_3d && config.coarse.feature_provider == "import" &&
      (!inputs.source_features || !inputs.target_features))
    throw ConfigError("coarse.feature_provider: import needs features for both epochs");
  detail::PipelineRunner runner(config, inputs);
  return runner.run();
}

namespace io {

inline void write_timings(const std::string& path, const StageTimings& t) {
  auto out = open_out(path);
  out << "stage,seconds\n";
  for (const auto& [k, v] : t.seconds) out << k << ',' << format_double(v) << '\n';
  out << "wall," << format_double(t.wall) << '\n';
}

inline void write_tile_summary(const std::string& path, const std::vector<TileSummary>& tiles) {
  auto out = open_out(path);
  out << "pair_id,source_points,target_points,resolution,resumed";
  for (const char* f : {"patches", "matches_3d", "matches_2d", "accepted", "estimated"})
    for (int l = 1; l <= 3; ++l) out << ',' << f << "_l" << l;
  out << '\n';
  for (const auto& t : tiles) {
    out << t.pair_id << ',' << t.source_points << ',' << t.target_points << ',' << format_double(t.resolution) << ','
        << (t.resumed ? 1 : 0);
    for (const auto* a : {&t.patches, &t.matches_3d, &t.matches_2d, &t.accepted, &t.estimated})
      for (std::size_t v : *a) out << ',' << v;
    out << '\n';
  }
}

/// dvf.csv, dvf_level{1,2,3}.csv, refinement.csv, tiles.csv, timings.csv,
/// p2p.csv (when enabled) and the effective config.json under `dir`.
inline void write_pipeline_outputs(const std::string& dir, const PipelineConfig& config, const PipelineResult& r) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path d(dir);
  write_dvf((d / "dvf.csv").string(), r.dvf);
  if (config.runtime.write_reports) {
    for (int l = 1; l <= 3; ++l)
      write_dvf((d / ("dvf_level" + std::to_string(l) + ".csv")).string(), r.levels[static_cast<std::size_t>(l - 1)]);
    write_refinement_report((d / "refinement.csv").string(), r.reports);
    write_tile_summary((d / "tiles.csv").string(), r.tiles);
  }
  if (config.fine.write_p2p) write_p2p((d / "p2p.csv").string(), r.p2p);
  write_timings((d / "timings.csv").string(), r.timings);
  std::ofstream cfg(d / "config.json");
  cfg << config_to_json(config).dump(2) << '\n';
}

}  // namespace io

}  // namespace patchflow
