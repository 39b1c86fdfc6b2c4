#pragma once

#include <string>
#include <vector>

#include "patchflow/errors.hpp"
#include "patchflow/geometry/types.hpp"
#include "patchflow/io/text.hpp"

namespace patchflow {

/// Undistorted pinhole camera. `pose` maps world to camera coordinates;
/// the camera looks along +z with image x to the right and y downwards.
struct CameraModel {
  std::string image_id;
  int width = 0;
  int height = 0;
  double fx = 0, fy = 0, cx = 0, cy = 0;
  RigidTransform pose;

  /// Throws SchemaError naming the first offending field.
  void validate() const {
    if (image_id.empty()) throw SchemaError("image_id", "must not be empty");
    if (width <= 0) throw SchemaError("width", "must be positive");
    if (height <= 0) throw SchemaError("height", "must be positive");
    if (!(fx > 0)) throw SchemaError("fx", "must be positive");
    if (!(fy > 0)) throw SchemaError("fy", "must be positive");
    if (!(cx >= 0 && cx < width)) throw SchemaError("cx", "must lie in [0, width)");
    if (!(cy >= 0 && cy < height)) throw SchemaError("cy", "must lie in [0, height)");
    if (!pose.is_valid(1e-6)) throw SchemaError("r11", "rotation block is not a proper rotation");
  }
};

namespace io {

inline const std::vector<std::string>& camera_fields() {
  static const std::vector<std::string> f = {"image_id", "width", "height", "fx",  "fy",  "cx",  "cy",
                                             "r11",      "r12",   "r13",    "r21", "r22", "r23", "r31",
                                             "r32",      "r33",   "t1",     "t2",  "t3"};
  return f;
}

/// CSV with header image_id,width,height,fx,fy,cx,cy,r11..r33,t1,t2,t3.
inline std::vector<CameraModel> load_camera(const std::string& path) {
  const CsvTable t = CsvTable::read(path);
  std::vector<std::size_t> col;
  for (const auto& f : camera_fields()) col.push_back(t.column(f));
  std::vector<CameraModel> cams;
  for (const auto& row : t.rows()) {
    CameraModel c;
    c.image_id = row.cells[col[0]];
    c.width = static_cast<int>(t.integer(row, col[1], "width"));
    c.height = static_cast<int>(t.integer(row, col[2], "height"));
    c.fx = t.number(row, col[3], "fx");
    c.fy = t.number(row, col[4], "fy");
    c.cx = t.number(row, col[5], "cx");
    c.cy = t.number(row, col[6], "cy");
    for (int r = 0; r < 3; ++r)
      for (int k = 0; k < 3; ++k) {
        const std::size_t i = 7 + static_cast<std::size_t>(3 * r + k);
        c.pose.rotation(r, k) = t.number(row, col[i], camera_fields()[i]);
      }
    for (int r = 0; r < 3; ++r) {
      const std::size_t i = 16 + static_cast<std::size_t>(r);
      c.pose.translation(r) = t.number(row, col[i], camera_fields()[i]);
    }
    c.validate();
    cams.push_back(std::move(c));
  }
  return cams;
}

inline void write_cameras(const std::string& path, const std::vector<CameraModel>& cams) {
  auto out = open_out(path);
  const auto& f = camera_fields();
  for (std::size_t i = 0; i < f.size(); ++i) out << (i ? "," : "") << f[i];
  out << '\n';
  for (const auto& c : cams) {
    out << c.image_id << ',' << c.width << ',' << c.height << ',' << format_double(c.fx) << ','
        << format_double(c.fy) << ',' << format_double(c.cx) << ',' << format_double(c.cy);
    for (int r = 0; r < 3; ++r)
      for (int k = 0; k < 3; ++k) out << ',' << format_double(c.pose.rotation(r, k));
    for (int r = 0; r < 3; ++r) out << ',' << format_double(c.pose.translation(r));
    out << '\n';
  }
}

}  // namespace io
}  // namespace patchflow
