#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iterator>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "patchflow/coarse/types.hpp"
#include "patchflow/errors.hpp"
#include "patchflow/io/text.hpp"

namespace patchflow {

struct RefinementCriteria {
  /// MADD bound in meters.
  double delta1 = 1.5;
  /// Minimum fraction of pairwise deviations below delta1.
  double delta2 = 0.1;
  /// Supports larger than this are scored on a random subset of this size.
  std::size_t max_support = 512;
  std::uint64_t seed = 0x5eed;

  void validate() const {
    if (!(delta1 > 0.0)) throw InvalidParams("delta1 must be positive");
    if (!(delta2 >= 0.0 && delta2 <= 1.0)) throw InvalidParams("delta2 must lie in [0, 1]");
    if (max_support < 2) throw InvalidParams("max_support must be at least 2");
  }
};

struct MatchQualityReport {
  int level = 1;
  long source_patch_id = 0;
  long target_patch_id = 0;
  std::size_t support_size = 0;
  double madd = 0.0;
  double pass_fraction = 0.0;
  bool accepted = false;
};

struct DistanceDeviation {
  double madd = 0.0;
  /// Fraction of pairs whose deviation is below the threshold.
  double pass_fraction = 0.0;
  std::size_t pairs = 0;
};

/// Mean and below-threshold fraction of | |p_i - p_j| - |q_i - q_j| | over
/// all unordered pairs of the selected correspondences.
inline DistanceDeviation distance_deviation(const PointCorrespondenceSet& corrs, std::span<const std::size_t> rows,
                                            double threshold) {
  if (rows.size() < 2) throw DegenerateInput("distance deviation needs at least 2 correspondences");
  double sum = 0.0;
  std::size_t pass = 0;
  for (std::size_t a = 0; a < rows.size(); ++a) {
    const Point3& pa = corrs.source[rows[a]];
    const Point3& qa = corrs.target[rows[a]];
    for (std::size_t b = a + 1; b < rows.size(); ++b) {
      const double dev = std::abs((pa - corrs.source[rows[b]]).norm() - (qa - corrs.target[rows[b]]).norm());
      sum += dev;
      pass += dev < threshold;
    }
  }
  DistanceDeviation out;
  out.pairs = rows.size() * (rows.size() - 1) / 2;
  out.madd = sum / static_cast<double>(out.pairs);
  out.pass_fraction = static_cast<double>(pass) / static_cast<double>(out.pairs);
  return out;
}

/// Mean absolute distance deviation over all unordered pairs.
inline double madd(const PointCorrespondenceSet& corrs) {
  if (corrs.size() < 2) throw DegenerateInput("madd needs at least 2 correspondences");
  std::vector<std::size_t> rows(corrs.size());
  std::iota(rows.begin(), rows.end(), 0);
  return distance_deviation(corrs, rows, 0.0).madd;
}

/// Accepted iff madd < delta1 and the pass fraction exceeds delta2. Supports
/// with fewer than two pairs are rejected with infinite madd.
inline MatchQualityReport evaluate_match(const PatchMatch& match, const RefinementCriteria& crit = {}) {
  crit.validate();
  MatchQualityReport r;
  r.level = match.level;
  r.source_patch_id = match.source_patch_id;
  r.target_patch_id = match.target_patch_id;
  r.support_size = match.support.size();
  if (match.support.size() < 2) {
    r.madd = std::numeric_limits<double>::infinity();
    return r;
  }
  std::vector<std::size_t> rows(match.support.size());
  std::iota(rows.begin(), rows.end(), 0);
  if (rows.size() > crit.max_support) {
    std::vector<std::size_t> picked;
    picked.reserve(crit.max_support);
    std::mt19937_64 rng(crit.seed);
    std::sample(rows.begin(), rows.end(), std::back_inserter(picked), crit.max_support, rng);
    rows.swap(picked);
  }
  const DistanceDeviation d = distance_deviation(match.support, rows, crit.delta1);
  r.madd = d.madd;
  r.pass_fraction = d.pass_fraction;
  r.accepted = d.madd < crit.delta1 && d.pass_fraction > crit.delta2;
  return r;
}

struct RefinementResult {
  MatchSet accepted;
  std::vector<MatchQualityReport> reports;
};

inline RefinementResult refine(const MatchSet& matches, const RefinementCriteria& crit = {}) {
  RefinementResult out;
  out.accepted.level = matches.level;
  for (const PatchMatch& m : matches.matches) {
    out.reports.push_back(evaluate_match(m, crit));
    if (out.reports.back().accepted) out.accepted.matches.push_back(m);
  }
  return out;
}

namespace io {

inline void write_refinement_report(const std::string& path, const std::vector<MatchQualityReport>& reports) {
  auto out = open_out(path);
  out << "level,source_patch,target_patch,madd,pass_fraction,accepted\n";
  for (const auto& r : reports)
    out << r.level << ',' << r.source_patch_id << ',' << r.target_patch_id << ',' << format_double(r.madd) << ','
        << format_double(r.pass_fraction) << ',' << (r.accepted ? 1 : 0) << '\n';
}

}  // namespace io

}  // namespace patchflow
