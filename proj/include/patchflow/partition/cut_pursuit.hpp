#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <queue>
#include <span>
#include <tuple>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "patchflow/errors.hpp"
#include "patchflow/partition/graph.hpp"
#include "patchflow/partition/max_flow.hpp"

namespace patchflow {

using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct CutPursuitParams {
  double lambda = 1.0;
  int max_iterations = 50;
  /// Min-cut / mean-update alternations per split attempt.
  int split_iterations = 3;
};

struct CutPursuitResult {
  /// Component of each node. Components are connected and numbered by
  /// their smallest node.
  std::vector<std::uint32_t> component;
  FeatureMatrix values;
  double energy = 0.0;
  int iterations = 0;

  std::size_t component_count() const { return static_cast<std::size_t>(values.rows()); }
};

/// sum_i |f_i - mean(component(i))|^2 + lambda * sum of weights of edges
/// joining different components.
inline double partition_energy(const FeatureMatrix& f, const AdjacencyGraph& g, std::span<const std::uint32_t> label,
                               double lambda) {
  const std::size_t n = static_cast<std::size_t>(f.rows());
  std::uint32_t k = 0;
  for (std::uint32_t l : label) k = std::max(k, l + 1);
  FeatureMatrix sum = FeatureMatrix::Zero(k, f.cols());
  std::vector<double> count(k, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    sum.row(label[i]) += f.row(static_cast<Eigen::Index>(i));
    count[label[i]] += 1.0;
  }
  double e = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    e += (f.row(static_cast<Eigen::Index>(i)) - sum.row(label[i]) / count[label[i]]).squaredNorm();
  for (std::size_t u = 0; u < n; ++u) {
    const auto adj = g.adjacent(u);
    const auto w = g.adjacent_weights(u);
    for (std::size_t a = 0; a < adj.size(); ++a)
      if (adj[a] > u && label[adj[a]] != label[u]) e += lambda * w[a];
  }
  return e;
}

namespace detail {

class CutPursuit {
 public:
  CutPursuit(const FeatureMatrix& f, const AdjacencyGraph& g, const CutPursuitParams& p)
      : f_(f), g_(g), p_(p), n_(static_cast<std::size_t>(f.rows())), local_(n_, -1), side_(n_, 0) {}

  CutPursuitResult run() {
    comps_ = connected_parts(all_nodes(), nullptr);
    saturated_.assign(comps_.size(), 0);
    int it = 0;
    for (; it < p_.max_iterations; ++it) {
      bool split_any = false;
      std::vector<std::vector<std::uint32_t>> next;
      std::vector<std::uint8_t> next_sat;
      for (std::size_t c = 0; c < comps_.size(); ++c) {
        if (saturated_[c]) {
          next.push_back(std::move(comps_[c]));
          next_sat.push_back(1);
          continue;
        }
        auto pieces = try_split(comps_[c]);
        if (pieces.empty()) {
          next.push_back(std::move(comps_[c]));
          next_sat.push_back(1);
        } else {
          split_any = true;
          for (auto& piece : pieces) {
            next.push_back(std::move(piece));
            next_sat.push_back(0);
          }
        }
      }
      comps_ = std::move(next);
      saturated_ = std::move(next_sat);
      merge();
      if (!split_any) break;
    }
    return finish(it + 1);
  }

 private:
  std::vector<std::uint32_t> all_nodes() const {
    std::vector<std::uint32_t> v(n_);
    for (std::size_t i = 0; i < n_; ++i) v[i] = static_cast<std::uint32_t>(i);
    return v;
  }

  // Connected pieces of `members`; with `side` set, edges only join nodes
  // on the same side.
  std::vector<std::vector<std::uint32_t>> connected_parts(const std::vector<std::uint32_t>& members,
                                                          const std::vector<std::uint8_t>* side) {
    for (std::size_t i = 0; i < members.size(); ++i) local_[members[i]] = static_cast<std::int64_t>(i);
    std::vector<std::uint8_t> seen(members.size(), 0);
    std::vector<std::vector<std::uint32_t>> parts;
    std::vector<std::uint32_t> stack;
    for (std::size_t s = 0; s < members.size(); ++s) {
      if (seen[s]) continue;
      parts.emplace_back();
      seen[s] = 1;
      stack.assign(1, members[s]);
      while (!stack.empty()) {
        const std::uint32_t v = stack.back();
        stack.pop_back();
        parts.back().push_back(v);
        for (std::uint32_t w : g_.adjacent(v)) {
          const std::int64_t lw = local_[w];
          if (lw < 0 || seen[static_cast<std::size_t>(lw)]) continue;
          if (side && (*side)[w] != (*side)[v]) continue;
          seen[static_cast<std::size_t>(lw)] = 1;
          stack.push_back(w);
        }
      }
      std::sort(parts.back().begin(), parts.back().end());
    }
    for (std::uint32_t v : members) local_[v] = -1;
    return parts;
  }

  Eigen::RowVectorXd mean_of(const std::vector<std::uint32_t>& m) const {
    Eigen::RowVectorXd s = Eigen::RowVectorXd::Zero(f_.cols());
    for (std::uint32_t v : m) s += f_.row(v);
    return s / static_cast<double>(m.size());
  }

  double sse(const std::vector<std::uint32_t>& m, const Eigen::RowVectorXd& c) const {
    double e = 0.0;
    for (std::uint32_t v : m) e += (f_.row(v) - c).squaredNorm();
    return e;
  }

  std::uint32_t farthest(const std::vector<std::uint32_t>& m, const Eigen::RowVectorXd& from) const {
    std::uint32_t best = m.front();
    double bd = -1.0;
    for (std::uint32_t v : m) {
      const double d = (f_.row(v) - from).squaredNorm();
      if (d > bd) {
        bd = d;
        best = v;
      }
    }
    return best;
  }

  // Lloyd iterations for two centers, ignoring the graph.
  void two_means(const std::vector<std::uint32_t>& m, Eigen::RowVectorXd& c0, Eigen::RowVectorXd& c1) const {
    for (int k = 0; k < 10; ++k) {
      Eigen::RowVectorXd s0 = Eigen::RowVectorXd::Zero(f_.cols()), s1 = s0;
      double n0 = 0, n1 = 0;
      for (std::uint32_t v : m) {
        if ((f_.row(v) - c0).squaredNorm() <= (f_.row(v) - c1).squaredNorm()) {
          s0 += f_.row(v);
          n0 += 1;
        } else {
          s1 += f_.row(v);
          n1 += 1;
        }
      }
      if (n0 == 0 || n1 == 0) return;
      const Eigen::RowVectorXd m0 = s0 / n0, m1 = s1 / n1;
      if (m0 == c0 && m1 == c1) return;
      c0 = m0;
      c1 = m1;
    }
  }

  // Alternates a graph cut with mean updates from centers (c0, c1). Leaves
  // the labeling in side_ and returns the energy of the binary split, or
  // infinity when everything ends on one side. Expects local_ set for m.
  double cut_alternation(const std::vector<std::uint32_t>& m, Eigen::RowVectorXd c0, Eigen::RowVectorXd c1) {
    for (int it = 0; it < std::max(1, p_.split_iterations); ++it) {
      flow_.reset(m.size());
      for (std::size_t i = 0; i < m.size(); ++i) {
        const double d0 = (f_.row(m[i]) - c0).squaredNorm();
        const double d1 = (f_.row(m[i]) - c1).squaredNorm();
        const double lo = std::min(d0, d1);
        const auto li = static_cast<std::uint32_t>(i);
        flow_.add_terminal(li, d1 - lo, d0 - lo);
        const auto adj = g_.adjacent(m[i]);
        const auto w = g_.adjacent_weights(m[i]);
        for (std::size_t a = 0; a < adj.size(); ++a) {
          const std::int64_t lj = local_[adj[a]];
          if (lj > static_cast<std::int64_t>(i))
            flow_.add_edge(li, static_cast<std::uint32_t>(lj), p_.lambda * w[a], p_.lambda * w[a]);
        }
      }
      flow_.solve();
      const auto reach = flow_.source_side();
      Eigen::RowVectorXd s0 = Eigen::RowVectorXd::Zero(f_.cols()), s1 = s0;
      double n0 = 0, n1 = 0;
      for (std::size_t i = 0; i < m.size(); ++i) {
        side_[m[i]] = reach[i] ? 0 : 1;
        if (reach[i]) {
          s0 += f_.row(m[i]);
          n0 += 1;
        } else {
          s1 += f_.row(m[i]);
          n1 += 1;
        }
      }
      if (n0 == 0 || n1 == 0) return std::numeric_limits<double>::infinity();
      c0 = s0 / n0;
      c1 = s1 / n1;
    }
    double e = 0.0;
    for (std::uint32_t v : m) {
      e += (f_.row(v) - (side_[v] ? c1 : c0)).squaredNorm();
      const auto adj = g_.adjacent(v);
      const auto w = g_.adjacent_weights(v);
      for (std::size_t a = 0; a < adj.size(); ++a)
        if (adj[a] > v && local_[adj[a]] >= 0 && side_[adj[a]] != side_[v]) e += p_.lambda * w[a];
    }
    return e;
  }

  // Binary split of one component, initialized from the farthest pair or a
  // principal-axis split. Returns the connected pieces when the split lowers
  // the energy.
  std::vector<std::vector<std::uint32_t>> try_split(const std::vector<std::uint32_t>& m) {
    if (m.size() < 2) return {};
    const Eigen::RowVectorXd mu = mean_of(m);
    const double e0 = sse(m, mu);
    if (e0 <= 1e-12 * static_cast<double>(m.size())) return {};

    std::vector<std::pair<Eigen::RowVectorXd, Eigen::RowVectorXd>> inits;
    {
      Eigen::RowVectorXd c0 = f_.row(farthest(m, mu));
      Eigen::RowVectorXd c1 = f_.row(farthest(m, c0));
      if ((c0 - c1).squaredNorm() > 0.0) inits.emplace_back(c0, c1);
    }
    {
      Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(f_.cols(), f_.cols());
      for (std::uint32_t v : m) {
        const Eigen::RowVectorXd d = f_.row(v) - mu;
        cov += d.transpose() * d;
      }
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
      const Eigen::VectorXd axis = es.eigenvectors().col(f_.cols() - 1);
      Eigen::RowVectorXd s0 = Eigen::RowVectorXd::Zero(f_.cols()), s1 = s0;
      double n0 = 0, n1 = 0;
      for (std::uint32_t v : m) {
        if ((f_.row(v) - mu).dot(axis.transpose()) <= 0.0) {
          s0 += f_.row(v);
          n0 += 1;
        } else {
          s1 += f_.row(v);
          n1 += 1;
        }
      }
      if (n0 > 0 && n1 > 0) inits.emplace_back(s0 / n0, s1 / n1);
    }

    if (inits.empty()) return {};
    // The graph cut runs from the initialization with the lower two-means
    // error only.
    std::size_t pick = 0;
    double pick_sse = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < inits.size(); ++k) {
      auto& [c0, c1] = inits[k];
      two_means(m, c0, c1);
      double e = 0.0;
      for (std::uint32_t v : m) e += std::min((f_.row(v) - c0).squaredNorm(), (f_.row(v) - c1).squaredNorm());
      if (e < pick_sse) {
        pick_sse = e;
        pick = k;
      }
    }
    for (std::size_t i = 0; i < m.size(); ++i) local_[m[i]] = static_cast<std::int64_t>(i);
    const double e1 = cut_alternation(m, inits[pick].first, inits[pick].second);
    for (std::uint32_t v : m) local_[v] = -1;
    if (!(e1 < e0 - 1e-12 * (1.0 + e0))) return {};
    return connected_parts(m, &side_);
  }

  // Greedily merges adjacent components while a merge lowers the energy.
  void merge() {
    const std::size_t k = comps_.size();
    if (k < 2) return;
    std::vector<std::uint32_t> label(n_);
    for (std::size_t c = 0; c < k; ++c)
      for (std::uint32_t v : comps_[c]) label[v] = static_cast<std::uint32_t>(c);
    std::vector<std::map<std::uint32_t, double>> nb(k);
    for (std::size_t u = 0; u < n_; ++u) {
      const auto adj = g_.adjacent(u);
      const auto w = g_.adjacent_weights(u);
      for (std::size_t a = 0; a < adj.size(); ++a)
        if (adj[a] > u && label[adj[a]] != label[u]) {
          nb[label[u]][label[adj[a]]] += w[a];
          nb[label[adj[a]]][label[u]] += w[a];
        }
    }
    FeatureMatrix sum(k, f_.cols());
    std::vector<double> cnt(k);
    for (std::size_t c = 0; c < k; ++c) {
      sum.row(static_cast<Eigen::Index>(c)).setZero();
      for (std::uint32_t v : comps_[c]) sum.row(static_cast<Eigen::Index>(c)) += f_.row(v);
      cnt[c] = static_cast<double>(comps_[c].size());
    }
    std::vector<std::uint32_t> version(k, 0);
    std::vector<std::uint8_t> alive(k, 1);
    // A merged component inherits the saturation of its largest constituent.
    std::vector<double> lead(cnt);
    std::vector<std::uint8_t> lead_sat(saturated_);

    struct Cand {
      double gain;
      std::uint32_t a, b, va, vb;
      bool operator<(const Cand& o) const {
        if (gain != o.gain) return gain < o.gain;
        return std::tie(a, b) > std::tie(o.a, o.b);
      }
    };
    auto gain = [&](std::uint32_t a, std::uint32_t b, double w) {
      const Eigen::RowVectorXd d = sum.row(a) / cnt[a] - sum.row(b) / cnt[b];
      return p_.lambda * w - cnt[a] * cnt[b] / (cnt[a] + cnt[b]) * d.squaredNorm();
    };
    std::priority_queue<Cand> heap;
    for (std::uint32_t a = 0; a < k; ++a)
      for (const auto& [b, w] : nb[a])
        if (a < b) {
          const double gn = gain(a, b, w);
          if (gn > 0.0) heap.push({gn, a, b, 0, 0});
        }
    while (!heap.empty()) {
      const Cand c = heap.top();
      heap.pop();
      if (!alive[c.a] || !alive[c.b] || version[c.a] != c.va || version[c.b] != c.vb) continue;
      const std::uint32_t a = c.a, b = c.b;
      alive[b] = 0;
      if (lead[b] > lead[a]) {
        lead[a] = lead[b];
        lead_sat[a] = lead_sat[b];
      }
      ++version[a];
      sum.row(a) += sum.row(b);
      cnt[a] += cnt[b];
      if (comps_[a].size() < comps_[b].size()) comps_[a].swap(comps_[b]);
      comps_[a].insert(comps_[a].end(), comps_[b].begin(), comps_[b].end());
      comps_[b].clear();
      for (const auto& [x, w] : nb[b]) {
        if (x == a) continue;
        nb[a][x] += w;
        nb[x].erase(b);
        nb[x][a] += w;
      }
      nb[a].erase(b);
      nb[b].clear();
      for (const auto& [x, w] : nb[a]) {
        const double gn = gain(std::min(a, x), std::max(a, x), w);
        if (gn > 0.0) {
          const std::uint32_t lo = std::min(a, x), hi = std::max(a, x);
          heap.push({gn, lo, hi, version[lo], version[hi]});
        }
      }
    }
    std::vector<std::vector<std::uint32_t>> kept;
    std::vector<std::uint8_t> sat;
    for (std::size_t c = 0; c < k; ++c) {
      if (!alive[c]) continue;
      std::sort(comps_[c].begin(), comps_[c].end());
      kept.push_back(std::move(comps_[c]));
      sat.push_back(lead_sat[c]);
    }
    comps_ = std::move(kept);
    saturated_ = std::move(sat);
  }

  CutPursuitResult finish(int iterations) {
    std::sort(comps_.begin(), comps_.end(), [](const auto& a, const auto& b) { return a.front() < b.front(); });
    CutPursuitResult r;
    r.iterations = iterations;
    r.component.assign(n_, 0);
    r.values.resize(static_cast<Eigen::Index>(comps_.size()), f_.cols());
    for (std::size_t c = 0; c < comps_.size(); ++c) {
      for (std::uint32_t v : comps_[c]) r.component[v] = static_cast<std::uint32_t>(c);
      r.values.row(static_cast<Eigen::Index>(c)) = mean_of(comps_[c]);
    }
    r.energy = partition_energy(f_, g_, r.component, p_.lambda);
    return r;
  }

  const FeatureMatrix& f_;
  const AdjacencyGraph& g_;
  CutPursuitParams p_;
  std::size_t n_;
  std::vector<std::int64_t> local_;
  std::vector<std::uint8_t> side_;
  std::vector<std::vector<std::uint32_t>> comps_;
  std::vector<std::uint8_t> saturated_;
  MaxFlow flow_;
};

}  // namespace detail

/// Approximate minimizer of the l0 partition energy by cut pursuit: grow the
/// partition with energy-decreasing binary graph cuts, then merge adjacent
/// components while that lowers the energy.
inline CutPursuitResult l0_cut_pursuit(const FeatureMatrix& features, const AdjacencyGraph& graph,
                                       const CutPursuitParams& params) {
  if (!(params.lambda >= 0.0)) throw InvalidParams("lambda must be non-negative");
  if (features.rows() == 0) return {};
  if (graph.node_count() != static_cast<std::size_t>(features.rows()))
    throw InvalidParams("graph and feature matrix disagree on node count");
  return detail::CutPursuit(features, graph, params).run();
}

}  // namespace patchflow
