#pragma once

#include <algorithm>
#include <span>
#include <tuple>
#include <utility>
#include <vector>

#include "patchflow/errors.hpp"
#include "patchflow/geometry/nn_index.hpp"

namespace patchflow {

/// Undirected weighted graph in CSR form; every edge is stored in both
/// endpoint lists with the same weight.
struct AdjacencyGraph {
  std::vector<std::size_t> offsets{0};
  std::vector<std::uint32_t> neighbors;
  std::vector<double> weights;
  double mean_edge_length = 0.0;

  std::size_t node_count() const { return offsets.size() - 1; }
  std::size_t edge_count() const { return neighbors.size() / 2; }
  std::size_t degree(std::size_t v) const { return offsets[v + 1] - offsets[v]; }

  std::span<const std::uint32_t> adjacent(std::size_t v) const {
    return {neighbors.data() + offsets[v], degree(v)};
  }
  std::span<const double> adjacent_weights(std::size_t v) const { return {weights.data() + offsets[v], degree(v)}; }

  bool has_edge(std::size_t a, std::size_t b) const {
    const auto adj = adjacent(a);
    return std::find(adj.begin(), adj.end(), static_cast<std::uint32_t>(b)) != adj.end();
  }

  /// Builds from a list of undirected edges (u, v, weight); duplicates and
  /// self loops are dropped, keeping the first occurrence.
  static AdjacencyGraph from_edges(std::size_t n, std::vector<std::tuple<std::uint32_t, std::uint32_t, double>> edges) {
    for (auto& [u, v, w] : edges)
      if (u > v) std::swap(u, v);
    std::stable_sort(edges.begin(), edges.end(), [](const auto& a, const auto& b) {
      return std::get<0>(a) != std::get<0>(b) ? std::get<0>(a) < std::get<0>(b) : std::get<1>(a) < std::get<1>(b);
    });
    std::vector<std::tuple<std::uint32_t, std::uint32_t, double>> uniq;
    uniq.reserve(edges.size());
    for (const auto& e : edges) {
      if (std::get<0>(e) == std::get<1>(e)) continue;
      if (!uniq.empty() && std::get<0>(uniq.back()) == std::get<0>(e) && std::get<1>(uniq.back()) == std::get<1>(e))
        continue;
      uniq.push_back(e);
    }
    AdjacencyGraph g;
    g.offsets.assign(n + 1, 0);
    for (const auto& [u, v, w] : uniq) {
      ++g.offsets[u + 1];
      ++g.offsets[v + 1];
    }
    for (std::size_t i = 0; i < n; ++i) g.offsets[i + 1] += g.offsets[i];
    g.neighbors.resize(2 * uniq.size());
    g.weights.resize(2 * uniq.size());
    std::vector<std::size_t> fill(g.offsets.begin(), g.offsets.end() - 1);
    for (const auto& [u, v, w] : uniq) {
      g.neighbors[fill[u]] = v;
      g.weights[fill[u]++] = w;
      g.neighbors[fill[v]] = u;
      g.weights[fill[v]++] = w;
    }
    return g;
  }
};

/// Symmetrized k-nearest-neighbor graph with weights 1/(1 + d/d_mean).
inline AdjacencyGraph build_adjacency_graph(const NNIndex& index, std::size_t k_adj = 10) {
  if (k_adj < 3) throw InvalidParams("k_adj must be at least 3");
  const std::size_t n = index.size();
  std::vector<std::tuple<std::uint32_t, std::uint32_t, double>> edges;
  edges.reserve(n * k_adj);
  for (std::size_t i = 0; i < n; ++i) {
    for (const Neighbor& nb : index.knn(index.point(i), k_adj + 1)) {
      if (nb.index == i) continue;
      edges.emplace_back(static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(nb.index), nb.distance);
    }
  }
  AdjacencyGraph g = AdjacencyGraph::from_edges(n, std::move(edges));
  double sum = 0.0;
  for (std::size_t i = 0; i < g.neighbors.size(); ++i) sum += g.weights[i];
  g.mean_edge_length = g.neighbors.empty() ? 0.0 : sum / static_cast<double>(g.neighbors.size());
  for (double& w : g.weights) w = g.mean_edge_length > 0.0 ? 1.0 / (1.0 + w / g.mean_edge_length) : 1.0;
  return g;
}

inline AdjacencyGraph build_adjacency_graph(std::span<const Point3> pts, std::size_t k_adj = 10) {
  if (pts.empty()) return {};
  return build_adjacency_graph(NNIndex(pts), k_adj);
}

}  // namespace patchflow
