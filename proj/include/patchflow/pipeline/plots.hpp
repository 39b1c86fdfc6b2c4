#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "patchflow/dvf.hpp"
#include "patchflow/errors.hpp"
#include "patchflow/io/text.hpp"

namespace patchflow {

struct PlotRow {
  PointIndex id = 0;
  Point3 position = Point3::Zero();
  double magnitude = 0.0;
  /// Degrees clockwise from +Y (north) toward +X (east), in [0, 360).
  double azimuth = 0.0;
  /// Degrees above the horizontal plane, in [-90, 90].
  double elevation = 0.0;
  /// False for zero vectors; both angles are then NaN.
  bool defined = true;
};

/// Magnitude, azimuth and elevation of one displacement. Azimuth is
/// undefined for purely vertical vectors and reported as 0 there.
inline PlotRow plot_row(PointIndex id, const DvfEntry& e) {
  constexpr double deg = 180.0 / std::numbers::pi;
  PlotRow r;
  r.id = id;
  r.position = e.position;
  r.magnitude = e.vector.norm();
  if (r.magnitude == 0.0) {
    r.defined = false;
    r.azimuth = r.elevation = std::nan("");
    return r;
  }
  const double h = std::hypot(e.vector.x(), e.vector.y());
  r.elevation = std::atan2(e.vector.z(), h) * deg;
  if (h > 0.0) {
    r.azimuth = std::atan2(e.vector.x(), e.vector.y()) * deg;
    if (r.azimuth < 0.0) r.azimuth += 360.0;
    if (r.azimuth >= 360.0) r.azimuth -= 360.0;
  }
  return r;
}

inline std::vector<PlotRow> plot_rows(const DisplacementVectorField& dvf) {
  if (dvf.empty()) throw InvalidParams("plot export needs a non-empty displacement field");
  std::vector<PlotRow> out;
  out.reserve(dvf.size());
  for (const auto& [id, e] : dvf) out.push_back(plot_row(id, e));
  return out;
}

namespace io {

/// magnitude.csv, azimuth.csv and elevation.csv in `dir`, each with
/// x,y,z,value,defined rows.
inline void export_plot_data(const std::string& dir, const DisplacementVectorField& dvf) {
  const std::vector<PlotRow> rows = plot_rows(dvf);
  const char* names[3] = {"magnitude", "azimuth", "elevation"};
  for (int k = 0; k < 3; ++k) {
    const std::string path = dir + "/" + names[k] + ".csv";
    auto out = open_out(path);
    out << "x,y,z," << names[k] << ",defined\n";
    for (const PlotRow& r : rows) {
      const double v = k == 0 ? r.magnitude : k == 1 ? r.azimuth : r.elevation;
      out << format_double(r.position.x()) << ',' << format_double(r.position.y()) << ','
          << format_double(r.position.z()) << ',' << (std::isnan(v) ? std::string("nan") : format_double(v)) << ','
          << (r.defined ? 1 : 0) << '\n';
    }
    if (!out) throw Error("write failed: " + path);
  }
}

}  // namespace io

}  // namespace patchflow
