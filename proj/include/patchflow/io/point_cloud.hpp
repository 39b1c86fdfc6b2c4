#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "patchflow/errors.hpp"
#include "patchflow/geometry/kabsch.hpp"
#include "patchflow/io/text.hpp"

namespace patchflow {

using Rgb = std::array<std::uint8_t, 3>;

/// One epoch of scan data. `colors` is empty or has one entry per point.
struct PointCloud {
  std::vector<Point3> points;
  std::vector<Rgb> colors;
  std::string epoch_label;
  std::string frame = "local";

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool has_color() const { return !colors.empty() && colors.size() == points.size(); }

  /// Luma in [0,255] (Rec. 601 weights).
  double gray(std::size_t i) const {
    const Rgb& c = colors[i];
    return 0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2];
  }
};

inline PointCloud apply_georeference(const PointCloud& cloud, const RigidTransform& t,
                                     const std::string& frame = "georeferenced") {
  PointCloud out = cloud;
  out.points = apply_transform(t, cloud.points);
  out.frame = frame;
  return out;
}

namespace io {

namespace detail {

inline std::uint8_t parse_channel(const std::string& path, std::size_t line, std::string_view tok) {
  const auto v = parse_double(tok);
  if (!v || *v < 0.0 || *v > 255.0) throw ParseError(path, line, "color value out of [0,255]: '" + std::string(tok) + "'");
  return static_cast<std::uint8_t>(std::lround(*v));
}

inline PointCloud load_ply(const std::string& path) {
  auto in = open_in(path);
  std::string line;
  std::size_t lineno = 0;
  auto next = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++lineno;
    return true;
  };
  if (!next() || trim(line) != "ply") throw ParseError(path, 1, "missing 'ply' magic");

  struct Element {
    std::string name;
    std::size_t count = 0;
    std::vector<std::string> props;
    bool has_list = false;
  };
  std::vector<Element> elements;
  bool header_done = false;
  while (next()) {
    const auto toks = split_ws(trim(line));
    if (toks.empty()) continue;
    if (toks[0] == "format") {
      if (toks.size() < 2 || toks[1] != "ascii") throw UnsupportedFormat(path + ": only ASCII PLY is supported");
    } else if (toks[0] == "comment" || toks[0] == "obj_info") {
    } else if (toks[0] == "element") {
      if (toks.size() != 3) throw ParseError(path, lineno, "malformed element line");
      const auto n = parse_int(toks[2]);
      if (!n || *n < 0) throw ParseError(path, lineno, "bad element count");
      elements.push_back({std::string(toks[1]), static_cast<std::size_t>(*n), {}, false});
    } else if (toks[0] == "property") {
      if (elements.empty() || toks.size() < 3) throw ParseError(path, lineno, "property outside element");
      if (toks[1] == "list") elements.back().has_list = true;
      elements.back().props.emplace_back(toks.back());
    } else if (toks[0] == "end_header") {
      header_done = true;
      break;
    } else {
      throw ParseError(path, lineno, "unexpected header line '" + std::string(toks[0]) + "'");
    }
  }
  if (!header_done) throw ParseError(path, lineno, "missing end_header");

  PointCloud cloud;
  cloud.epoch_label = std::filesystem::path(path).stem().string();
  for (const Element& el : elements) {
    if (el.name != "vertex") {
      for (std::size_t i = 0; i < el.count; ++i)
        if (!next()) throw ParseError(path, lineno, "truncated element '" + el.name + "'");
      continue;
    }
    if (el.has_list) throw UnsupportedFormat(path + ": list properties on vertices");
    auto find = [&](std::initializer_list<const char*> names) -> long {
      for (const char* nm : names)
        for (std::size_t i = 0; i < el.props.size(); ++i)
          if (el.props[i] == nm) return static_cast<long>(i);
      return -1;
    };
    const long ix = find({"x"}), iy = find({"y"}), iz = find({"z"});
    if (ix < 0 || iy < 0 || iz < 0) throw ParseError(path, lineno, "vertex element lacks x/y/z");
    const long ir = find({"red", "r", "diffuse_red"});
    const long ig = find({"green", "g", "diffuse_green"});
    const long ib = find({"blue", "b", "diffuse_blue"});
    const bool color = ir >= 0 && ig >= 0 && ib >= 0;
    cloud.points.reserve(el.count);
    if (color) cloud.colors.reserve(el.count);
    for (std::size_t i = 0; i < el.count; ++i) {
      if (!next()) throw ParseError(path, lineno, "truncated vertex list");
      const auto toks = split_ws(trim(line));
      if (toks.size() != el.props.size())
        throw ParseError(path, lineno, "expected " + std::to_string(el.props.size()) + " values");
      Point3 p;
      const long idx[3] = {ix, iy, iz};
      for (int d = 0; d < 3; ++d) {
        const auto v = parse_double(toks[static_cast<std::size_t>(idx[d])]);
        if (!v || !std::isfinite(*v)) throw ParseError(path, lineno, "bad coordinate");
        p(d) = *v;
      }
      cloud.points.push_back(p);
      if (color) {
        cloud.colors.push_back({parse_channel(path, lineno, toks[static_cast<std::size_t>(ir)]),
                                parse_channel(path, lineno, toks[static_cast<std::size_t>(ig)]),
                                parse_channel(path, lineno, toks[static_cast<std::size_t>(ib)])});
      }
    }
  }
  return cloud;
}

inline PointCloud load_xyz(const std::string& path) {
  auto in = open_in(path);
  PointCloud cloud;
  cloud.epoch_label = std::filesystem::path(path).stem().string();
  std::string line;
  std::size_t lineno = 0;
  int columns = -1;
  while (std::getline(in, line)) {
    ++lineno;
    const auto s = trim(line);
    if (s.empty() || s.front() == '#') continue;
    const auto toks = split_ws(s);
    if (toks.size() != 3 && toks.size() != 6) throw ParseError(path, lineno, "expected 3 or 6 values");
    if (columns < 0) columns = static_cast<int>(toks.size());
    if (static_cast<int>(toks.size()) != columns) throw ParseError(path, lineno, "inconsistent column count");
    Point3 p;
    for (int d = 0; d < 3; ++d) {
      const auto v = parse_double(toks[static_cast<std::size_t>(d)]);
      if (!v || !std::isfinite(*v)) throw ParseError(path, lineno, "bad coordinate '" + std::string(toks[d]) + "'");
      p(d) = *v;
    }
    cloud.points.push_back(p);
    if (columns == 6)
      cloud.colors.push_back({parse_channel(path, lineno, toks[3]), parse_channel(path, lineno, toks[4]),
                              parse_channel(path, lineno, toks[5])});
  }
  return cloud;
}

inline std::string lower_ext(const std::string& path) {
  std::string ext = std::filesystem::path(path).extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return ext;
}

}  // namespace detail

/// ASCII PLY (by extension or magic) or whitespace XYZ[RGB].
inline PointCloud load_point_cloud(const std::string& path) {
  const std::string ext = detail::lower_ext(path);
  PointCloud cloud;
  if (ext == ".ply") {
    cloud = detail::load_ply(path);
  } else if (ext == ".xyz" || ext == ".txt" || ext == ".pts" || ext == ".asc") {
    cloud = detail::load_xyz(path);
  } else {
    throw UnsupportedFormat("unrecognized point cloud extension '" + ext + "' for " + path);
  }
  if (cloud.points.empty()) throw ParseError(path, 0, "point cloud has no points");
  return cloud;
}

inline void write_point_cloud(const std::string& path, const PointCloud& cloud) {
  const std::string ext = detail::lower_ext(path);
  auto out = open_out(path);
  const bool color = cloud.has_color();
  if (ext == ".ply") {
    out << "ply\nformat ascii 1.0\ncomment frame " << cloud.frame << "\nelement vertex " << cloud.size()
        << "\nproperty double x\nproperty double y\nproperty double z\n";
    if (color) out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    out << "end_header\n";
  } else if (ext != ".xyz" && ext != ".txt" && ext != ".pts" && ext != ".asc") {
    throw UnsupportedFormat("unrecognized point cloud extension '" + ext + "' for " + path);
  }
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Point3& p = cloud.points[i];
    out << format_double(p.x()) << ' ' << format_double(p.y()) << ' ' << format_double(p.z());
    if (color) out << ' ' << int(cloud.colors[i][0]) << ' ' << int(cloud.colors[i][1]) << ' ' << int(cloud.colors[i][2]);
    out << '\n';
  }
  if (!out) throw Error("write failed: " + path);
}

/// 4x4 homogeneous matrix as 16 whitespace-separated numbers (row-major).
inline RigidTransform load_transform(const std::string& path) {
  auto in = open_in(path);
  std::vector<double> v;
  std::string tok;
  while (in >> tok) {
    const auto d = parse_double(tok);
    if (!d) throw ParseError(path, 0, "non-numeric matrix entry '" + tok + "'");
    v.push_back(*d);
  }
  if (v.size() != 16) throw ParseError(path, 0, "expected 16 matrix entries, got " + std::to_string(v.size()));
  RigidTransform t;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) t.rotation(r, c) = v[static_cast<std::size_t>(4 * r + c)];
    t.translation(r) = v[static_cast<std::size_t>(4 * r + 3)];
  }
  if (!t.is_valid(1e-6)) throw SchemaError("matrix", "rotation block is not a proper rotation");
  return t;
}

}  // namespace io
}  // namespace patchflow
