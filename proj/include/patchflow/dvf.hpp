#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "patchflow/errors.hpp"
#include "patchflow/geometry/types.hpp"
#include "patchflow/io/text.hpp"

namespace patchflow {

/// Which kind of evidence produced a patch match.
enum class Modality { k3D, k2D };

inline const char* to_string(Modality m) { return m == Modality::k3D ? "3D" : "2D"; }

inline Modality modality_from_string(std::string_view s) {
  if (s == "3D") return Modality::k3D;
  if (s == "2D") return Modality::k2D;
  throw Error("unknown modality '" + std::string(s) + "'");
}

struct DvfEntry {
  Point3 position;
  Vec3 vector;
  /// Hierarchy level 1..3; 0 for fields not produced by the hierarchy.
  int level = 1;
  long patch_id = -1;
  Modality modality = Modality::k3D;
};

/// Per-source-point displacement with provenance, keyed by point id.
class DisplacementVectorField {
 public:
  using Map = std::map<PointIndex, DvfEntry>;

  void set(PointIndex id, DvfEntry e) { entries_[id] = e; }
  bool contains(PointIndex id) const { return entries_.count(id) != 0; }
  const DvfEntry* find(PointIndex id) const {
    const auto it = entries_.find(id);
    return it == entries_.end() ? nullptr : &it->second;
  }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const Map& entries() const { return entries_; }
  Map& entries() { return entries_; }

  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  std::vector<Point3> positions() const {
    std::vector<Point3> out;
    out.reserve(entries_.size());
    for (const auto& [id, e] : entries_) out.push_back(e.position);
    return out;
  }

 private:
  Map entries_;
};

namespace io {

/// x,y,z,dx,dy,dz,level,patch_id,modality; one row per estimated point in
/// ascending point-id order.
inline void write_dvf(const std::string& path, const DisplacementVectorField& dvf) {
  auto out = open_out(path);
  out << "x,y,z,dx,dy,dz,level,patch_id,modality\n";
  for (const auto& [id, e] : dvf) {
    out << format_double(e.position.x()) << ',' << format_double(e.position.y()) << ','
        << format_double(e.position.z()) << ',' << format_double(e.vector.x()) << ','
        << format_double(e.vector.y()) << ',' << format_double(e.vector.z()) << ',' << e.level << ','
        << e.patch_id << ',' << to_string(e.modality) << '\n';
  }
  if (!out) throw Error("write failed: " + path);
}

/// Rows are keyed by their order in the file; map them to source ids with
/// the positions when a cloud is available.
inline DisplacementVectorField read_dvf(const std::string& path) {
  const CsvTable t = CsvTable::read(path);
  const char* num[6] = {"x", "y", "z", "dx", "dy", "dz"};
  std::size_t c[6];
  for (int i = 0; i < 6; ++i) c[i] = t.column(num[i]);
  const std::size_t cl = t.column("level"), cp = t.column("patch_id"), cm = t.column("modality");
  DisplacementVectorField dvf;
  PointIndex id = 0;
  for (const auto& row : t.rows()) {
    DvfEntry e;
    for (int i = 0; i < 3; ++i) e.position(i) = t.number(row, c[i], num[i]);
    for (int i = 0; i < 3; ++i) e.vector(i) = t.number(row, c[3 + i], num[3 + i]);
    e.level = static_cast<int>(t.integer(row, cl, "level"));
    if (e.level < 0 || e.level > 3) throw ParseError(path, row.line, "level must lie in [0, 3]");
    e.patch_id = static_cast<long>(t.integer(row, cp, "patch_id"));
    try {
      e.modality = modality_from_string(row.cells[cm]);
    } catch (const Error&) {
      throw ParseError(path, row.line, "unknown modality '" + row.cells[cm] + "'");
    }
    dvf.set(id++, e);
  }
  return dvf;
}

}  // namespace io
}  // namespace patchflow
