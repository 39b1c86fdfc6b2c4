#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "patchflow/errors.hpp"
#include "patchflow/geometry/types.hpp"

namespace patchflow {

struct Neighbor {
  PointIndex index;
  double distance;
};

/// Exact Euclidean k-d tree. Immutable once built; concurrent const queries
/// are safe. Results are ordered by (distance, index) so that ties resolve
/// to the lowest point index, identical to a linear scan.
class NNIndex {
 public:
  explicit NNIndex(std::span<const Point3> pts, std::size_t leaf_size = 12)
      : points_(pts.begin(), pts.end()), leaf_size_(std::max<std::size_t>(1, leaf_size)) {
    if (points_.empty()) throw EmptyIndex();
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), PointIndex{0});
    nodes_.reserve(2 * points_.size() / leaf_size_ + 2);
    build(0, points_.size());
  }

  std::size_t size() const { return points_.size(); }
  const Point3& point(PointIndex i) const { return points_[i]; }
  const std::vector<Point3>& points() const { return points_; }

  /// The k nearest points (fewer when the index holds fewer than k).
  std::vector<Neighbor> knn(const Point3& q, std::size_t k) const {
    std::vector<Candidate> heap;
    if (k == 0) return {};
    heap.reserve(k + 1);
    knn_visit(0, q, k, heap);
    std::sort_heap(heap.begin(), heap.end());
    std::vector<Neighbor> out;
    out.reserve(heap.size());
    for (const Candidate& c : heap) out.push_back({c.index, std::sqrt(c.d2)});
    return out;
  }

  Neighbor nearest(const Point3& q) const { return knn(q, 1).front(); }

  /// All points with distance <= r, ordered by (distance, index).
  std::vector<Neighbor> radius(const Point3& q, double r) const {
    std::vector<Candidate> hits;
    radius_visit(0, q, r * r, hits);
    std::sort(hits.begin(), hits.end());
    std::vector<Neighbor> out;
    out.reserve(hits.size());
    for (const Candidate& c : hits) out.push_back({c.index, std::sqrt(c.d2)});
    return out;
  }

  /// Indices within distance r; unordered, cheaper than radius().
  void radius_indices(const Point3& q, double r, std::vector<PointIndex>& out) const {
    out.clear();
    radius_collect(0, q, r * r, out);
  }

 private:
  struct Node {
    std::size_t begin, end;
    std::int32_t left = -1, right = -1;
    Eigen::Vector3d lo, hi;
  };

  struct Candidate {
    double d2;
    PointIndex index;
    bool operator<(const Candidate& o) const { return d2 < o.d2 || (d2 == o.d2 && index < o.index); }
  };

  std::int32_t build(std::size_t begin, std::size_t end) {
    const auto id = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back({begin, end, -1, -1, {}, {}});
    Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
    Eigen::Vector3d hi = -lo;
    for (std::size_t i = begin; i < end; ++i) {
      lo = lo.cwiseMin(points_[order_[i]]);
      hi = hi.cwiseMax(points_[order_[i]]);
    }
    nodes_[id].lo = lo;
    nodes_[id].hi = hi;
    if (end - begin <= leaf_size_) return id;

    int dim = 0;
    (hi - lo).maxCoeff(&dim);
    if (hi(dim) - lo(dim) <= 0.0) return id;  // all coincident
    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                     order_.begin() + static_cast<std::ptrdiff_t>(mid),
                     order_.begin() + static_cast<std::ptrdiff_t>(end),
                     [&](PointIndex a, PointIndex b) { return points_[a](dim) < points_[b](dim); });
    const std::int32_t l = build(begin, mid);
    const std::int32_t r = build(mid, end);
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
  }

  static double box_d2(const Node& n, const Point3& q) {
    double s = 0.0;
    for (int d = 0; d < 3; ++d) {
      const double v = q(d) < n.lo(d) ? n.lo(d) - q(d) : (q(d) > n.hi(d) ? q(d) - n.hi(d) : 0.0);
      s += v * v;
    }
    return s;
  }

  void knn_visit(std::int32_t id, const Point3& q, std::size_t k, std::vector<Candidate>& heap) const {
    const Node& n = nodes_[id];
    if (n.left < 0) {
      for (std::size_t i = n.begin; i < n.end; ++i) {
        const PointIndex pi = order_[i];
        const Candidate c{(points_[pi] - q).squaredNorm(), pi};
        if (heap.size() < k) {
          heap.push_back(c);
          std::push_heap(heap.begin(), heap.end());
        } else if (c < heap.front()) {
          std::pop_heap(heap.begin(), heap.end());
          heap.back() = c;
          std::push_heap(heap.begin(), heap.end());
        }
      }
      return;
    }
    const double dl = box_d2(nodes_[n.left], q);
    const double dr = box_d2(nodes_[n.right], q);
    const std::int32_t first = dl <= dr ? n.left : n.right;
    const std::int32_t second = dl <= dr ? n.right : n.left;
    const double d_first = std::min(dl, dr);
    const double d_second = std::max(dl, dr);
    if (heap.size() < k || d_first <= heap.front().d2) knn_visit(first, q, k, heap);
    if (heap.size() < k || d_second <= heap.front().d2) knn_visit(second, q, k, heap);
  }

  void radius_visit(std::int32_t id, const Point3& q, double r2, std::vector<Candidate>& hits) const {
    const Node& n = nodes_[id];
    if (box_d2(n, q) > r2) return;
    if (n.left < 0) {
      for (std::size_t i = n.begin; i < n.end; ++i) {
        const PointIndex pi = order_[i];
        const double d2 = (points_[pi] - q).squaredNorm();
        if (d2 <= r2) hits.push_back({d2, pi});
      }
      return;
    }
    radius_visit(n.left, q, r2, hits);
    radius_visit(n.right, q, r2, hits);
  }

  void radius_collect(std::int32_t id, const Point3& q, double r2, std::vector<PointIndex>& out) const {
    const Node& n = nodes_[id];
    if (box_d2(n, q) > r2) return;
    if (n.left < 0) {
      for (std::size_t i = n.begin; i < n.end; ++i) {
        const PointIndex pi = order_[i];
        if ((points_[pi] - q).squaredNorm() <= r2) out.push_back(pi);
      }
      return;
    }
    radius_collect(n.left, q, r2, out);
    radius_collect(n.right, q, r2, out);
  }

  std::vector<Point3> points_;
  std::vector<PointIndex> order_;
  std::vector<Node> nodes_;
  std::size_t leaf_size_;
};

inline NNIndex build_nn_index(std::span<const Point3> pts) { return NNIndex(pts); }

inline std::vector<Neighbor> nn_query(const NNIndex& index, const Point3& q, std::size_t k) {
  return index.knn(q, k);
}

}  // namespace patchflow
