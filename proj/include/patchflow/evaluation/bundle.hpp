#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "patchflow/evaluation/synthetic.hpp"
#include "patchflow/io/camera.hpp"
#include "patchflow/io/point_cloud.hpp"
#include "patchflow/io/raster.hpp"
#include "patchflow/io/tables.hpp"
#include "patchflow/pipeline/config.hpp"

namespace patchflow {

/// Configuration whose inputs point into a bundle written by
/// write_synthetic_bundle.
inline PipelineConfig bundle_config(const std::string& dir) {
  const std::filesystem::path d(dir);
  PipelineConfig c;
  c.inputs.source = (d / "source.ply").string();
  c.inputs.target = (d / "target.ply").string();
  c.inputs.source_cameras = (d / "source_cameras.json").string();
  c.inputs.target_cameras = (d / "target_cameras.json").string();
  c.inputs.source_images = (d / "images" / "source").string();
  c.inputs.target_images = (d / "images" / "target").string();
  c.inputs.observations = (d / "observations.csv").string();
  c.output_dir = (d / "out").string();
  return c;
}

/// One observation per body at its surface point closest to the body
/// centroid, carrying that point's true displacement.
inline std::vector<ExternalObservation> body_observations(const SyntheticScene& sc) {
  std::vector<ExternalObservation> out;
  for (std::size_t b = 0; b < sc.bodies.size(); ++b) {
    const auto& ids = sc.bodies[b].point_ids;
    if (ids.empty()) continue;
    Point3 c = Point3::Zero();
    for (PointIndex i : ids) c += sc.source.points[i];
    c /= static_cast<double>(ids.size());
    PointIndex best = ids[0];
    for (PointIndex i : ids)
      if ((sc.source.points[i] - c).squaredNorm() < (sc.source.points[best] - c).squaredNorm()) best = i;
    out.push_back({"body" + std::to_string(b), sc.source.points[best], sc.displacement[best]});
  }
  return out;
}

/// Bundle configuration with each observation compared over half the
/// smaller footprint semi-axis of its body.
inline PipelineConfig bundle_config(const std::string& dir, const SyntheticScene& sc) {
  PipelineConfig c = bundle_config(dir);
  for (std::size_t b = 0; b < sc.bodies.size(); ++b)
    c.evaluation.radius_overrides["body" + std::to_string(b)] =
        0.5 * std::min(sc.bodies[b].spec.semi_a, sc.bodies[b].spec.semi_b);
  return c;
}

namespace io {

/// Writes clouds, cameras, images, ground truth (ground_truth.csv in the
/// DVF layout, patch_id = body index or -1), body table, per-body
/// observations and a config.json ready for `run`.
inline void write_synthetic_bundle(const std::string& dir, const SyntheticScene& sc) {
  const std::filesystem::path d(dir);
  std::filesystem::create_directories(d / "images" / "source");
  std::filesystem::create_directories(d / "images" / "target");
  write_point_cloud((d / "source.ply").string(), sc.source);
  write_point_cloud((d / "target.ply").string(), sc.target);
  write_cameras((d / "source_cameras.json").string(), sc.source_cameras);
  write_cameras((d / "target_cameras.json").string(), sc.target_cameras);
  for (const Raster& r : sc.source_images) write_raster((d / "images" / "source" / (r.image_id + ".pgm")).string(), r);
  for (const Raster& r : sc.target_images) write_raster((d / "images" / "target" / (r.image_id + ".pgm")).string(), r);
  write_dvf((d / "ground_truth.csv").string(), ground_truth_dvf(sc));
  write_external_observations((d / "observations.csv").string(), body_observations(sc));

  auto out = open_out((d / "bodies.csv").string());
  out << "body,kind,textured,albedo,points,tx,ty,tz,rotation_deg\n";
  for (std::size_t b = 0; b < sc.bodies.size(); ++b) {
    const SyntheticBody& body = sc.bodies[b];
    const double angle = Eigen::AngleAxisd(body.motion.rotation).angle() * 180.0 / std::numbers::pi;
    out << b << ',' << to_string(body.spec.kind) << ',' << (body.spec.textured ? 1 : 0) << ','
        << format_double(body.spec.albedo) << ',' << body.point_ids.size();
    for (int k = 0; k < 3; ++k) out << ',' << format_double(body.motion.translation(k));
    out << ',' << format_double(angle) << '\n';
  }
  if (!out) throw Error("write failed: " + (d / "bodies.csv").string());

  std::ofstream cfg(d / "config.json");
  cfg << config_to_json(bundle_config(dir, sc)).dump(2) << '\n';
  if (!cfg) throw Error("write failed: " + (d / "config.json").string());
}

}  // namespace io

}  // namespace patchflow
