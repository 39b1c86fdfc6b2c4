#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "patchflow/errors.hpp"
#include "patchflow/geometry/types.hpp"
#include "patchflow/io/text.hpp"

namespace patchflow {

/// Reference displacement measured at a discrete location (prism, GNSS).
struct ExternalObservation {
  std::string id;
  Point3 position;
  Vec3 displacement;
};

struct PixelMatch {
  double u1, v1, u2, v2;
  double confidence;
};

struct PixelMatchSet {
  std::string source_image;
  std::string target_image;
  std::vector<PixelMatch> matches;
};

/// Unit-norm descriptors keyed by point index. Rows of `descriptors` follow
/// `point_indices`.
struct PointFeatureSet {
  std::vector<PointIndex> point_indices;
  Eigen::MatrixXd descriptors;
  std::string provider_id;

  std::size_t size() const { return point_indices.size(); }
  Eigen::Index dim() const { return descriptors.cols(); }

  /// Row of `index`, or -1 when the point has no descriptor.
  long row_of(PointIndex index) const {
    if (lookup_.size() != point_indices.size()) rebuild_lookup();
    const auto it = lookup_.find(index);
    return it == lookup_.end() ? -1 : static_cast<long>(it->second);
  }

  void rebuild_lookup() const {
    lookup_.clear();
    lookup_.reserve(point_indices.size());
    for (std::size_t i = 0; i < point_indices.size(); ++i) lookup_.emplace(point_indices[i], i);
  }

 private:
  mutable std::unordered_map<PointIndex, std::size_t> lookup_;
};

namespace io {

/// id,x,y,z,dx,dy,dz
inline std::vector<ExternalObservation> load_external_observations(const std::string& path) {
  const CsvTable t = CsvTable::read(path);
  const std::size_t cid = t.column("id");
  const char* names[6] = {"x", "y", "z", "dx", "dy", "dz"};
  std::size_t c[6];
  for (int i = 0; i < 6; ++i) c[i] = t.column(names[i]);
  std::vector<ExternalObservation> out;
  for (const auto& row : t.rows()) {
    ExternalObservation o;
    o.id = row.cells[cid];
    for (int i = 0; i < 3; ++i) o.position(i) = t.number(row, c[i], names[i]);
    for (int i = 0; i < 3; ++i) o.displacement(i) = t.number(row, c[3 + i], names[3 + i]);
    if (!o.displacement.allFinite()) throw ParseError(path, row.line, "displacement must be finite");
    out.push_back(std::move(o));
  }
  return out;
}

inline void write_external_observations(const std::string& path, const std::vector<ExternalObservation>& obs) {
  auto out = open_out(path);
  out << "id,x,y,z,dx,dy,dz\n";
  for (const auto& o : obs) {
    out << o.id;
    for (int i = 0; i < 3; ++i) out << ',' << format_double(o.position(i));
    for (int i = 0; i < 3; ++i) out << ',' << format_double(o.displacement(i));
    out << '\n';
  }
}

/// src_image,tgt_image,u1,v1,u2,v2,confidence. Rows are grouped by image
/// pair in order of first appearance.
inline std::vector<PixelMatchSet> load_pixel_matches(const std::string& path) {
  const CsvTable t = CsvTable::read(path);
  const std::size_t cs = t.column("src_image"), ct = t.column("tgt_image");
  const char* names[5] = {"u1", "v1", "u2", "v2", "confidence"};
  std::size_t c[5];
  for (int i = 0; i < 5; ++i) c[i] = t.column(names[i]);
  std::vector<PixelMatchSet> sets;
  std::map<std::pair<std::string, std::string>, std::size_t> slot;
  for (const auto& row : t.rows()) {
    PixelMatch m{t.number(row, c[0], names[0]), t.number(row, c[1], names[1]), t.number(row, c[2], names[2]),
                 t.number(row, c[3], names[3]), t.number(row, c[4], names[4])};
    if (m.confidence < 0.0 || m.confidence > 1.0) throw ParseError(path, row.line, "confidence outside [0,1]");
    const auto key = std::make_pair(row.cells[cs], row.cells[ct]);
    auto it = slot.find(key);
    if (it == slot.end()) {
      it = slot.emplace(key, sets.size()).first;
      sets.push_back({key.first, key.second, {}});
    }
    sets[it->second].matches.push_back(m);
  }
  return sets;
}

inline void write_pixel_matches(const std::string& path, const std::vector<PixelMatchSet>& sets) {
  auto out = open_out(path);
  out << "src_image,tgt_image,u1,v1,u2,v2,confidence\n";
  for (const auto& s : sets)
    for (const auto& m : s.matches)
      out << s.source_image << ',' << s.target_image << ',' << format_double(m.u1) << ',' << format_double(m.v1)
          << ',' << format_double(m.u2) << ',' << format_double(m.v2) << ',' << format_double(m.confidence) << '\n';
}

/// point_index,f1..fD. Descriptors are L2-normalized on load.
inline PointFeatureSet load_point_features(const std::string& path) {
  const CsvTable t = CsvTable::read(path);
  const std::size_t ci = t.column("point_index");
  std::vector<std::size_t> fc;
  for (std::size_t d = 1;; ++d) {
    const std::string name = "f" + std::to_string(d);
    if (!t.has(name)) break;
    fc.push_back(t.column(name));
  }
  if (fc.empty()) throw SchemaError("f1", "no descriptor columns in " + path);
  PointFeatureSet set;
  set.provider_id = "import";
  set.descriptors.resize(static_cast<Eigen::Index>(t.rows().size()), static_cast<Eigen::Index>(fc.size()));
  std::unordered_map<PointIndex, std::size_t> seen;
  for (std::size_t r = 0; r < t.rows().size(); ++r) {
    const auto& row = t.rows()[r];
    const long long idx = t.integer(row, ci, "point_index");
    if (idx < 0) throw ParseError(path, row.line, "negative point_index");
    if (!seen.emplace(static_cast<PointIndex>(idx), r).second) throw ParseError(path, row.line, "duplicate point_index");
    set.point_indices.push_back(static_cast<PointIndex>(idx));
    for (std::size_t d = 0; d < fc.size(); ++d)
      set.descriptors(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(d)) =
          t.number(row, fc[d], "f" + std::to_string(d + 1));
    const double n = set.descriptors.row(static_cast<Eigen::Index>(r)).norm();
    if (!(n > 0.0) || !std::isfinite(n)) throw ParseError(path, row.line, "zero or non-finite descriptor");
    set.descriptors.row(static_cast<Eigen::Index>(r)) /= n;
  }
  return set;
}

inline void write_point_features(const std::string& path, const PointFeatureSet& set) {
  auto out = open_out(path);
  out << "point_index";
  for (Eigen::Index d = 0; d < set.dim(); ++d) out << ",f" << d + 1;
  out << '\n';
  for (std::size_t r = 0; r < set.size(); ++r) {
    out << set.point_indices[r];
    for (Eigen::Index d = 0; d < set.dim(); ++d) out << ',' << format_double(set.descriptors(static_cast<Eigen::Index>(r), d));
    out << '\n';
  }
}

/// point_index,weight: fixed per-point weights for weighted patch aggregation.
inline std::unordered_map<PointIndex, double> load_attention_weights(const std::string& path) {
  const CsvTable t = CsvTable::read(path);
  const std::size_t ci = t.column("point_index"), cw = t.column("weight");
  std::unordered_map<PointIndex, double> w;
  for (const auto& row : t.rows()) {
    const long long idx = t.integer(row, ci, "point_index");
    const double v = t.number(row, cw, "weight");
    if (idx < 0 || !(v >= 0.0)) throw ParseError(path, row.line, "invalid weight row");
    w[static_cast<PointIndex>(idx)] = v;
  }
  return w;
}

}  // namespace io
}  // namespace patchflow
