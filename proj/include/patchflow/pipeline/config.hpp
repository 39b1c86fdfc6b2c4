#pragma once

#include <algorithm>
#include <array>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "patchflow/errors.hpp"

namespace patchflow {

/// Every tunable of the pipeline. Defaults follow the published method where
/// it states a value (10 m margin and displacement gate, 1 million points per
/// tile, delta1 = 1.5 m, delta2 = 0.1, k = 1 image, 15 m comparison radius).
struct PipelineConfig {
  struct Inputs {
    std::string source;
    std::string target;
    std::string source_cameras;
    std::string target_cameras;
    /// Directories holding <image_id>.pgm or <image_id>.ppm.
    std::string source_images;
    std::string target_images;
    std::string source_georeference;
    std::string target_georeference;
    std::string source_features;
    std::string target_features;
    std::string source_attention;
    std::string target_attention;
    std::string pixel_matches;
    std::string observations;
  } inputs;

  std::string output_dir = "patchflow_out";

  struct Tiling {
    std::size_t max_points = 1000000;
    double overlap_margin = 10.0;
  } tiling;

  struct Partition {
    std::array<double, 3> lambda_factors{0.1, 0.5, 2.0};
    std::size_t k_adj = 10;
    std::size_t k_features = 64;
    std::size_t min_patch = 10;
    int max_iterations = 50;
    /// Use point colors (or colors sampled from the top image) as a feature.
    bool use_gray = true;
  } partition;

  struct Coarse {
    /// Off by default: with the builtin descriptor, 3D matches are mostly
    /// wrong and win conflicts against 2D matches. Enable it together with
    /// imported learned features.
    bool use_3d = false;
    bool use_2d = true;
    std::string feature_provider = "builtin";
    std::string matcher = "builtin";
    double voxel_factor = 2.0;
    double fpfh_radius_factor = 5.0;
    std::size_t max_support_candidates = 4096;
    std::size_t k_images = 1;
    double r_px = 2.0;
    double d_max = 10.0;
    int ncc_stride = 4;
    int ncc_template_radius = 7;
    int ncc_search_window = 64;
    double ncc_min_conf = 0.7;
    double occlusion_cell_px = 4.0;
  } coarse;

  struct Refinement {
    double delta1 = 1.5;
    double delta2 = 0.1;
    std::size_t max_support = 512;
  } refinement;

  struct Fine {
    double icp_gate_factor = 2.0;
    int icp_max_iterations = 30;
    double icp_convergence_tol = 1e-6;
    bool write_p2p = false;
    /// Multiple of the mean scan resolution.
    double p2p_threshold_factor = 1.0;
  } fine;

  struct Evaluation {
    double radius = 15.0;
    std::map<std::string, double> radius_overrides;
  } evaluation;

  struct Runtime {
    std::size_t threads = 0;
    bool checkpoint = false;
    bool resume = false;
    bool write_reports = true;
  } runtime;

  void validate() const {
    auto fail = [](const std::string& key, const std::string& why) { throw ConfigError(key + ": " + why); };
    if (tiling.max_points < 1000) fail("tiling.max_points", "must be at least 1000");
    if (!(tiling.overlap_margin >= 0.0)) fail("tiling.overlap_margin", "must be non-negative");
    const auto& l = partition.lambda_factors;
    if (!(l[0] > 0.0 && l[0] < l[1] && l[1] < l[2]))
      fail("partition.lambda_factors", "must be positive and increasing");
    if (partition.k_adj < 3) fail("partition.k_adj", "must be at least 3");
    if (partition.k_features < 3) fail("partition.k_features", "must be at least 3");
    if (!coarse.use_3d && !coarse.use_2d) fail("coarse", "at least one of use_3d and use_2d must be set");
    if (coarse.feature_provider != "builtin" && coarse.feature_provider != "import")
      fail("coarse.feature_provider", "must be 'builtin' or 'import'");
    if (coarse.matcher != "builtin" && coarse.matcher != "import")
      fail("coarse.matcher", "must be 'builtin' or 'import'");
    if (!(coarse.voxel_factor > 0.0)) fail("coarse.voxel_factor", "must be positive");
    if (!(coarse.fpfh_radius_factor > 0.0)) fail("coarse.fpfh_radius_factor", "must be positive");
    if (coarse.k_images < 1) fail("coarse.k_images", "must be at least 1");
    if (!(coarse.r_px > 0.0)) fail("coarse.r_px", "must be positive");
    if (!(coarse.d_max > 0.0)) fail("coarse.d_max", "must be positive");
    if (coarse.ncc_stride < 1) fail("coarse.ncc_stride", "must be positive");
    if (coarse.ncc_template_radius < 1) fail("coarse.ncc_template_radius", "must be positive");
    if (coarse.ncc_search_window < 2) fail("coarse.ncc_search_window", "must be at least 2");
    if (!(coarse.ncc_min_conf >= 0.0 && coarse.ncc_min_conf <= 1.0)) fail("coarse.ncc_min_conf", "must lie in [0, 1]");
    if (!(refinement.delta1 > 0.0)) fail("refinement.delta1", "must be positive");
    if (!(refinement.delta2 >= 0.0 && refinement.delta2 <= 1.0)) fail("refinement.delta2", "must lie in [0, 1]");
    if (refinement.max_support < 2) fail("refinement.max_support", "must be at least 2");
    if (!(fine.icp_gate_factor > 0.0)) fail("fine.icp_gate_factor", "must be positive");
    if (fine.icp_max_iterations < 1) fail("fine.icp_max_iterations", "must be positive");
    if (!(fine.p2p_threshold_factor > 0.0)) fail("fine.p2p_threshold_factor", "must be positive");
    if (!(evaluation.radius > 0.0)) fail("evaluation.radius", "must be positive");
    for (const auto& [id, r] : evaluation.radius_overrides)
      if (!(r > 0.0)) fail("evaluation.radius_overrides." + id, "must be positive");
  }

  /// Input paths the enabled stages need.
  void validate_paths() const {
    auto fail = [](const std::string& key, const std::string& why) { throw ConfigError(key + ": " + why); };
    if (inputs.source.empty() || inputs.target.empty()) fail("inputs", "source and target clouds are required");
    if (coarse.use_2d && (inputs.source_cameras.empty() || inputs.target_cameras.empty()))
      fail("coarse.use_2d", "2D matching needs inputs.source_cameras and inputs.target_cameras");
    if (coarse.use_2d && coarse.matcher == "builtin" && (inputs.source_images.empty() || inputs.target_images.empty()))
      fail("coarse.use_2d", "the builtin matcher needs inputs.source_images and inputs.target_images");
    if (coarse.use_2d && coarse.matcher == "import" && inputs.pixel_matches.empty())
      fail("coarse.matcher", "import needs inputs.pixel_matches");
    if (coarse.use_3d && coarse.feature_provider == "import" &&
        (inputs.source_features.empty() || inputs.target_features.empty()))
      fail("coarse.feature_provider", "import needs inputs.source_features and inputs.target_features");
  }
};

namespace detail {

using json = nlohmann::json;

struct ConfigField {
  std::string key;
  std::function<void(const json&)> set;
  std::function<json()> get;
};

template <class T>
ConfigField bind_field(const std::string& key, T& ref) {
  return {key,
          [&ref, key](const json& v) {
            try {
              ref = v.get<T>();
            } catch (const json::exception& e) {
              throw ConfigError(key + ": wrong type (" + e.what() + ")");
            }
          },
          [&ref] { return json(ref); }};
}

inline std::vector<ConfigField> config_fields(PipelineConfig& c) {
  auto& i = c.inputs;
  auto& t = c.tiling;
  auto& p = c.partition;
  auto& m = c.coarse;
  auto& r = c.refinement;
  auto& f = c.fine;
  auto& e = c.evaluation;
  auto& u = c.runtime;
  return {
      bind_field("inputs.source", i.source), bind_field("inputs.target", i.target),
      bind_field("inputs.source_cameras", i.source_cameras), bind_field("inputs.target_cameras", i.target_cameras),
      bind_field("inputs.source_images", i.source_images), bind_field("inputs.target_images", i.target_images),
      bind_field("inputs.source_georeference", i.source_georeference),
      bind_field("inputs.target_georeference", i.target_georeference),
      bind_field("inputs.source_features", i.source_features), bind_field("inputs.target_features", i.target_features),
      bind_field("inputs.source_attention", i.source_attention),
      bind_field("inputs.target_attention", i.target_attention),
      bind_field("inputs.pixel_matches", i.pixel_matches), bind_field("inputs.observations", i.observations),
      bind_field("output_dir", c.output_dir),
      bind_field("tiling.max_points", t.max_points), bind_field("tiling.overlap_margin", t.overlap_margin),
      bind_field("partition.lambda_factors", p.lambda_factors), bind_field("partition.k_adj", p.k_adj),
      bind_field("partition.k_features", p.k_features), bind_field("partition.min_patch", p.min_patch),
      bind_field("partition.max_iterations", p.max_iterations), bind_field("partition.use_gray", p.use_gray),
      bind_field("coarse.use_3d", m.use_3d), bind_field("coarse.use_2d", m.use_2d),
      bind_field("coarse.feature_provider", m.feature_provider), bind_field("coarse.matcher", m.matcher),
      bind_field("coarse.voxel_factor", m.voxel_factor), bind_field("coarse.fpfh_radius_factor", m.fpfh_radius_factor),
      bind_field("coarse.max_support_candidates", m.max_support_candidates), bind_field("coarse.k_images", m.k_images),
      bind_field("coarse.r_px", m.r_px), bind_field("coarse.d_max", m.d_max),
      bind_field("coarse.ncc_stride", m.ncc_stride),
      bind_field("coarse.ncc_template_radius", m.ncc_template_radius),
      bind_field("coarse.ncc_search_window", m.ncc_search_window), bind_field("coarse.ncc_min_conf", m.ncc_min_conf),
      bind_field("coarse.occlusion_cell_px", m.occlusion_cell_px),
      bind_field("refinement.delta1", r.delta1), bind_field("refinement.delta2", r.delta2),
      bind_field("refinement.max_support", r.max_support),
      bind_field("fine.icp_gate_factor", f.icp_gate_factor),
      bind_field("fine.icp_max_iterations", f.icp_max_iterations),
      bind_field("fine.icp_convergence_tol", f.icp_convergence_tol), bind_field("fine.write_p2p", f.write_p2p),
      bind_field("fine.p2p_threshold_factor", f.p2p_threshold_factor),
      bind_field("evaluation.radius", e.radius), bind_field("evaluation.radius_overrides", e.radius_overrides),
      bind_field("runtime.threads", u.threads), bind_field("runtime.checkpoint", u.checkpoint),
      bind_field("runtime.resume", u.resume), bind_field("runtime.write_reports", u.write_reports),
  };
}

/// Dotted keys of the leaves of `j`. Objects nest except under keys whose
/// field is itself a map.
inline void flatten(const json& j, const std::string& prefix, const std::vector<ConfigField>& fields,
                    std::vector<std::pair<std::string, json>>& out) {
  for (const auto& [k, v] : j.items()) {
    const std::string key = prefix.empty() ? k : prefix + "." + k;
    bool is_field = false;
    for (const auto& f : fields) is_field = is_field || f.key == key;
    if (v.is_object() && !is_field) {
      flatten(v, key, fields, out);
    } else {
      out.emplace_back(key, v);
    }
  }
}

inline void apply(PipelineConfig& c, const std::string& key, const json& value) {
  for (auto& f : config_fields(c))
    if (f.key == key) {
      f.set(value);
      return;
    }
  throw ConfigError("unknown configuration key '" + key + "'");
}

}  // namespace detail

/// Applies a nested JSON object onto `c`; unknown keys are rejected.
inline void apply_config_json(PipelineConfig& c, const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("configuration root must be an object");
  std::vector<std::pair<std::string, nlohmann::json>> leaves;
  detail::flatten(j, "", detail::config_fields(c), leaves);
  for (const auto& [k, v] : leaves) detail::apply(c, k, v);
}

/// `key=value` with a dotted key; the value is parsed as JSON and falls back
/// to a plain string.
inline void apply_config_override(PipelineConfig& c, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  nlohmann::json v = nlohmann::json::parse(text, nullptr, false);
  if (v.is_discarded()) v = text;
  detail::apply(c, key, v);
}

inline nlohmann::json config_to_json(const PipelineConfig& c) {
  PipelineConfig copy = c;
  nlohmann::json out = nlohmann::json::object();
  for (const auto& f : detail::config_fields(copy)) {
    std::string pointer = "/" + f.key;
    std::replace(pointer.begin(), pointer.end(), '.', '/');
    out[nlohmann::json::json_pointer(pointer)] = f.get();
  }
  return out;
}

inline PipelineConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open configuration file '" + path + "'");
  const nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("configuration file '" + path + "' is not valid JSON");
  PipelineConfig c;
  apply_config_json(c, j);
  for (const auto& o : overrides) apply_config_override(c, o);
  c.validate();
  return c;
}

}  // namespace patchflow
