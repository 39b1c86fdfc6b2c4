#pragma once

#include <array>
#include <cmath>
#include <iomanip>
#include <map>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "patchflow/dvf.hpp"
#include "patchflow/errors.hpp"
#include "patchflow/geometry/nn_index.hpp"
#include "patchflow/io/tables.hpp"
#include "patchflow/io/text.hpp"

namespace patchflow {

namespace detail {

using VoxelKey = std::array<long long, 3>;

inline VoxelKey voxel_of(const Point3& p, const Point3& origin, double voxel) {
  const Vec3 k = ((p - origin) / voxel).array().floor();
  return {static_cast<long long>(k.x()), static_cast<long long>(k.y()), static_cast<long long>(k.z())};
}

}  // namespace detail

/// Fraction of occupied source voxels that hold at least one estimate.
inline double spatial_coverage(const DisplacementVectorField& dvf, std::span<const Point3> source, double voxel) {
  if (!(voxel > 0.0)) throw InvalidParams("coverage voxel size must be positive");
  if (source.empty()) return 0.0;
  Point3 origin = source[0];
  for (const Point3& p : source) origin = origin.cwiseMin(p);
  std::set<detail::VoxelKey> all, hit;
  for (const Point3& p : source) all.insert(detail::voxel_of(p, origin, voxel));
  for (const auto& [id, e] : dvf) {
    const auto k = detail::voxel_of(e.position, origin, voxel);
    if (all.count(k)) hit.insert(k);
  }
  return static_cast<double>(hit.size()) / static_cast<double>(all.size());
}

/// Deviations of one estimate from one reference displacement. Components
/// are X, Y, Z and magnitude S.
struct ObservationDeviation {
  std::string id;
  Vec3 estimate = Vec3::Zero();
  Vec3 reference = Vec3::Zero();
  std::array<double, 4> deviation{};
  /// Mean absolute deviation of the averaged estimates (zero for a single
  /// estimate).
  std::array<double, 4> mad{};
  std::size_t members = 1;
};

struct EvaluationReport {
  std::vector<ObservationDeviation> rows;
  std::array<double, 4> mean_deviation{};
  std::array<double, 4> mean_mad{};
  double coverage = -1.0;  // negative when not computed
};

namespace detail {

inline ObservationDeviation deviation_of(const std::string& id, const Vec3& est, const Vec3& ref) {
  ObservationDeviation d;
  d.id = id;
  d.estimate = est;
  d.reference = ref;
  for (int k = 0; k < 3; ++k) d.deviation[static_cast<std::size_t>(k)] = std::abs(est(k) - ref(k));
  d.deviation[3] = std::abs(est.norm() - ref.norm());
  return d;
}

inline void summarize(EvaluationReport& r) {
  r.mean_deviation = {};
  r.mean_mad = {};
  if (r.rows.empty()) return;
  for (const auto& row : r.rows)
    for (std::size_t k = 0; k < 4; ++k) {
      r.mean_deviation[k] += row.deviation[k] / static_cast<double>(r.rows.size());
      r.mean_mad[k] += row.mad[k] / static_cast<double>(r.rows.size());
    }
}

}  // namespace detail

/// Each observation is compared with the estimate at its nearest source
/// point.
inline EvaluationReport compare_nn(const DisplacementVectorField& dvf, std::span<const Point3> source,
                                   std::span<const ExternalObservation> obs) {
  if (dvf.empty()) throw DegenerateInput("displacement field is empty");
  const NNIndex index(source);
  EvaluationReport r;
  for (const auto& o : obs) {
    const Neighbor nb = index.nearest(o.position);
    const DvfEntry* e = dvf.find(nb.index);
    if (!e) throw NoEstimateNearObservation("no estimate at the source point nearest to observation '" + o.id + "'");
    r.rows.push_back(detail::deviation_of(o.id, e->vector, o.displacement));
  }
  detail::summarize(r);
  return r;
}

/// Each observation is compared with the mean of the estimates within
/// `radius` (or its entry in `radius_overrides`).
inline EvaluationReport compare_mean_radius(const DisplacementVectorField& dvf,
                                            std::span<const ExternalObservation> obs, double radius = 15.0,
                                            const std::map<std::string, double>& radius_overrides = {}) {
  if (!(radius > 0.0)) throw InvalidParams("comparison radius must be positive");
  if (dvf.empty()) throw EmptyNeighborhood("displacement field is empty");
  std::vector<Point3> pos;
  std::vector<Vec3> vec;
  for (const auto& [id, e] : dvf) {
    pos.push_back(e.position);
    vec.push_back(e.vector);
  }
  const NNIndex index(pos);
  EvaluationReport r;
  for (const auto& o : obs) {
    const auto it = radius_overrides.find(o.id);
    const double rad = it == radius_overrides.end() ? radius : it->second;
    if (!(rad > 0.0)) throw InvalidParams("comparison radius for '" + o.id + "' must be positive");
    const auto members = index.radius(o.position, rad);
    if (members.empty())
      throw EmptyNeighborhood("no estimate within " + std::to_string(rad) + " m of observation '" + o.id + "'");
    Vec3 mean = Vec3::Zero();
    double mean_mag = 0.0;
    for (const auto& m : members) {
      mean += vec[m.index];
      mean_mag += vec[m.index].norm();
    }
    const double n = static_cast<double>(members.size());
    mean /= n;
    mean_mag /= n;
    ObservationDeviation d = detail::deviation_of(o.id, mean, o.displacement);
    d.members = members.size();
    for (const auto& m : members) {
      for (int k = 0; k < 3; ++k) d.mad[static_cast<std::size_t>(k)] += std::abs(vec[m.index](k) - mean(k)) / n;
      d.mad[3] += std::abs(vec[m.index].norm() - mean_mag) / n;
    }
    r.rows.push_back(d);
  }
  detail::summarize(r);
  return r;
}

namespace io {

inline void write_evaluation_csv(const std::string& path, const EvaluationReport& r) {
  auto out = open_out(path);
  out << "id,est_dx,est_dy,est_dz,ref_dx,ref_dy,ref_dz,dev_x,dev_y,dev_z,dev_s,mad_x,mad_y,mad_z,mad_s,members\n";
  for (const auto& row : r.rows) {
    out << row.id;
    for (int k = 0; k < 3; ++k) out << ',' << format_double(row.estimate(k));
    for (int k = 0; k < 3; ++k) out << ',' << format_double(row.reference(k));
    for (double v : row.deviation) out << ',' << format_double(v);
    for (double v : row.mad) out << ',' << format_double(v);
    out << ',' << row.members << '\n';
  }
}

/// Fixed-width table: one row per observation and a closing mean row.
inline std::string format_evaluation_table(const EvaluationReport& r) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(3);
  s << std::left << std::setw(12) << "id" << std::right;
  for (const char* h : {"|dDX|", "|dDY|", "|dDZ|", "|dDS|", "MAD_S"}) s << std::setw(9) << h;
  s << '\n';
  for (const auto& row : r.rows) {
    s << std::left << std::setw(12) << row.id << std::right;
    for (double v : row.deviation) s << std::setw(9) << v;
    s << std::setw(9) << row.mad[3] << '\n';
  }
  s << std::left << std::setw(12) << "mean" << std::right;
  for (double v : r.mean_deviation) s << std::setw(9) << v;
  s << std::setw(9) << r.mean_mad[3] << '\n';
  if (r.coverage >= 0.0) s << "coverage " << std::setprecision(1) << 100.0 * r.coverage << " %\n";
  return s.str();
}

}  // namespace io

}  // namespace patchflow
