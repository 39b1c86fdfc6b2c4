#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "patchflow/errors.hpp"
#include "patchflow/io/camera.hpp"

namespace patchflow {

/// Image position of a 3D point. Pixel (i, j) is centered at u = i, v = j.
struct Projection {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;
  bool valid = false;
};

inline Projection project_point(const Point3& p, const CameraModel& cam) {
  const Vec3 c = cam.pose(p);
  Projection pr;
  pr.depth = c.z();
  if (!(c.z() > 0.0)) return pr;
  pr.u = cam.fx * c.x() / c.z() + cam.cx;
  pr.v = cam.fy * c.y() / c.z() + cam.cy;
  pr.valid = pr.u >= -0.5 && pr.u < cam.width - 0.5 && pr.v >= -0.5 && pr.v < cam.height - 0.5;
  return pr;
}

/// Pinhole projection; valid iff in front of the camera and inside the image.
inline std::vector<Projection> project_to_image(std::span<const Point3> pts, const CameraModel& cam) {
  std::vector<Projection> out(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) out[i] = project_point(pts[i], cam);
  return out;
}

/// Invalidates projections lying more than `depth_tol` behind the nearest
/// surface seen in their z-buffer cell of `cell_px` pixels.
inline void remove_occluded(std::vector<Projection>& proj, const CameraModel& cam, double cell_px = 4.0,
                            double depth_tol = 1.0) {
  if (!(cell_px > 0.0)) throw InvalidParams("z-buffer cell size must be positive");
  const int gw = static_cast<int>(std::ceil(cam.width / cell_px)) + 1;
  const int gh = static_cast<int>(std::ceil(cam.height / cell_px)) + 1;
  std::vector<double> zbuf(static_cast<std::size_t>(gw) * static_cast<std::size_t>(gh),
                           std::numeric_limits<double>::infinity());
  auto cell = [&](const Projection& p) {
    const int cx = std::clamp(static_cast<int>((p.u + 0.5) / cell_px), 0, gw - 1);
    const int cy = std::clamp(static_cast<int>((p.v + 0.5) / cell_px), 0, gh - 1);
    return static_cast<std::size_t>(cy) * static_cast<std::size_t>(gw) + static_cast<std::size_t>(cx);
  };
  for (const Projection& p : proj)
    if (p.valid) zbuf[cell(p)] = std::min(zbuf[cell(p)], p.depth);
  for (Projection& p : proj)
    if (p.valid && p.depth > zbuf[cell(p)] + depth_tol) p.valid = false;
}

inline std::size_t count_visible(std::span<const Point3> pts, const CameraModel& cam) {
  std::size_t n = 0;
  for (const Point3& p : pts) n += project_point(p, cam).valid;
  return n;
}

/// Ids of the `k` cameras onto which most tile points project; ties by
/// image id.
inline std::vector<std::string> select_top_k_images(std::span<const Point3> tile, std::span<const CameraModel> cams,
                                                    std::size_t k = 1) {
  if (cams.empty()) throw NoVisibleImage("no cameras given");
  std::vector<std::pair<std::size_t, std::string>> counts;
  for (const auto& c : cams) counts.emplace_back(count_visible(tile, c), c.image_id);
  std::sort(counts.begin(), counts.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  if (counts.front().first == 0) throw NoVisibleImage("no tile point projects into any image");
  std::vector<std::string> out;
  for (const auto& [n, id] : counts) {
    if (out.size() == k || n == 0) break;
    out.push_back(id);
  }
  return out;
}

}  // namespace patchflow
