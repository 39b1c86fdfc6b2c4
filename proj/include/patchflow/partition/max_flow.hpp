#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <limits>
#include <vector>

namespace patchflow {

/// s-t max-flow / min-cut with the Boykov-Kolmogorov search-tree algorithm.
/// Terminal links are given per node; capacities are real.
class MaxFlow {
 public:
  explicit MaxFlow(std::size_t nodes = 0) { reset(nodes); }

  void reset(std::size_t nodes) {
    nodes_.assign(nodes, Node{});
    head_.clear();
    next_.clear();
    cap_.clear();
    flow_ = 0.0;
  }

  std::size_t node_count() const { return nodes_.size(); }

  /// Capacity from the source to `v` and from `v` to the sink.
  void add_terminal(std::uint32_t v, double source_cap, double sink_cap) {
    const double r = nodes_[v].tr_cap;
    if (r > 0.0)
      source_cap += r;
    else
      sink_cap -= r;
    flow_ += std::min(source_cap, sink_cap);
    nodes_[v].tr_cap = source_cap - sink_cap;
  }

  /// u->v with capacity `cap` and v->u with `reverse_cap`.
  void add_edge(std::uint32_t u, std::uint32_t v, double cap, double reverse_cap = 0.0) {
    push_arc(u, v, cap);
    push_arc(v, u, reverse_cap);
  }

  double solve() {
    init();
    std::int64_t current = -1;
    for (;;) {
      std::int64_t i = -1;
      if (current >= 0) {
        nodes_[static_cast<std::size_t>(current)].active = false;
        if (nodes_[static_cast<std::size_t>(current)].parent != kNone) i = current;
      }
      if (i < 0 && (i = next_active()) < 0) break;
      const std::int64_t a = grow(static_cast<std::size_t>(i));
      ++time_;
      if (a >= 0) {
        nodes_[static_cast<std::size_t>(i)].active = true;
        current = i;
        augment(static_cast<std::size_t>(a));
        adopt();
      } else {
        current = -1;
      }
    }
    return flow_;
  }

  /// 1 for nodes on the source side of the minimum cut.
  std::vector<std::uint8_t> source_side() const {
    std::vector<std::uint8_t> out(nodes_.size());
    for (std::size_t v = 0; v < nodes_.size(); ++v) out[v] = nodes_[v].parent != kNone && !nodes_[v].is_sink;
    return out;
  }

 private:
  static constexpr double kEps = 1e-12;
  static constexpr std::int64_t kNone = -1, kTerminal = -2, kOrphan = -3;
  static constexpr int kInfDist = std::numeric_limits<int>::max();

  struct Node {
    std::int64_t first = -1;
    std::int64_t parent = kNone;  // arc towards the parent, or a marker
    double tr_cap = 0.0;          // > 0: residual from source, < 0: to sink
    int ts = 0;
    int dist = 0;
    bool is_sink = false;
    bool active = false;
  };

  void push_arc(std::uint32_t u, std::uint32_t v, double cap) {
    head_.push_back(v);
    cap_.push_back(cap);
    next_.push_back(nodes_[u].first);
    nodes_[u].first = static_cast<std::int64_t>(head_.size() - 1);
  }

  static std::size_t sister(std::size_t a) { return a ^ 1u; }
  std::size_t head(std::int64_t a) const { return head_[static_cast<std::size_t>(a)]; }

  void set_active(std::size_t v) {
    if (nodes_[v].active) return;
    nodes_[v].active = true;
    active_.push_back(v);
  }

  std::int64_t next_active() {
    while (!active_.empty()) {
      const std::size_t v = active_.front();
      active_.pop_front();
      nodes_[v].active = false;
      if (nodes_[v].parent != kNone) return static_cast<std::int64_t>(v);
    }
    return -1;
  }

  void init() {
    active_.clear();
    orphans_.clear();
    time_ = 0;
    for (std::size_t v = 0; v < nodes_.size(); ++v) {
      Node& n = nodes_[v];
      n.active = false;
      n.ts = 0;
      if (n.tr_cap > kEps) {
        n.is_sink = false;
        n.parent = kTerminal;
        n.dist = 1;
        set_active(v);
      } else if (n.tr_cap < -kEps) {
        n.is_sink = true;
        n.parent = kTerminal;
        n.dist = 1;
        set_active(v);
      } else {
        n.parent = kNone;
      }
    }
  }

  // Extends the tree of node i; returns an arc from the source tree to the
  // sink tree when the trees touch.
  std::int64_t grow(std::size_t i) {
    Node& ni = nodes_[i];
    for (std::int64_t a = ni.first; a >= 0; a = next_[static_cast<std::size_t>(a)]) {
      const auto au = static_cast<std::size_t>(a);
      const std::size_t residual = ni.is_sink ? sister(au) : au;
      if (cap_[residual] <= kEps) continue;
      const std::size_t j = head_[au];
      Node& nj = nodes_[j];
      if (nj.parent == kNone) {
        nj.is_sink = ni.is_sink;
        nj.parent = static_cast<std::int64_t>(sister(au));
        nj.ts = ni.ts;
        nj.dist = ni.dist + 1;
        set_active(j);
      } else if (nj.is_sink != ni.is_sink) {
        return static_cast<std::int64_t>(ni.is_sink ? sister(au) : au);
      } else if (nj.ts <= ni.ts && nj.dist > ni.dist) {
        nj.parent = static_cast<std::int64_t>(sister(au));
        nj.ts = ni.ts;
        nj.dist = ni.dist + 1;
      }
    }
    return -1;
  }

  void make_orphan(std::size_t v) {
    nodes_[v].parent = kOrphan;
    orphans_.push_back(v);
  }

  void augment(std::size_t middle) {
    double b = cap_[middle];
    std::size_t i = head_[sister(middle)];
    for (;;) {
      const std::int64_t a = nodes_[i].parent;
      if (a == kTerminal) break;
      b = std::min(b, cap_[sister(static_cast<std::size_t>(a))]);
      i = head(a);
    }
    b = std::min(b, nodes_[i].tr_cap);
    i = head_[middle];
    for (;;) {
      const std::int64_t a = nodes_[i].parent;
      if (a == kTerminal) break;
      b = std::min(b, cap_[static_cast<std::size_t>(a)]);
      i = head(a);
    }
    b = std::min(b, -nodes_[i].tr_cap);

    cap_[sister(middle)] += b;
    cap_[middle] -= b;
    i = head_[sister(middle)];
    for (;;) {
      const std::int64_t a = nodes_[i].parent;
      if (a == kTerminal) break;
      const auto au = static_cast<std::size_t>(a);
      cap_[au] += b;
      cap_[sister(au)] -= b;
      if (cap_[sister(au)] <= kEps) make_orphan(i);
      i = head_[au];
    }
    nodes_[i].tr_cap -= b;
    if (nodes_[i].tr_cap <= kEps) make_orphan(i);
    i = head_[middle];
    for (;;) {
      const std::int64_t a = nodes_[i].parent;
      if (a == kTerminal) break;
      const auto au = static_cast<std::size_t>(a);
      cap_[sister(au)] += b;
      cap_[au] -= b;
      if (cap_[au] <= kEps) make_orphan(i);
      i = head_[au];
    }
    nodes_[i].tr_cap += b;
    if (-nodes_[i].tr_cap <= kEps) make_orphan(i);
    flow_ += b;
  }

  // Distance to the terminal of j's tree through valid parents, or kInfDist
  // when the chain ends at an orphan. Marks visited nodes with this pass.
  int origin_distance(std::size_t j) {
    int d = 0;
    for (;;) {
      Node& n = nodes_[j];
      if (n.ts == time_) return d + n.dist;
      const std::int64_t a = n.parent;
      ++d;
      if (a == kTerminal) {
        n.ts = time_;
        n.dist = 1;
        return d;
      }
      if (a == kOrphan) return kInfDist;
      j = head(a);
    }
  }

  void adopt() {
    while (!orphans_.empty()) {
      const std::size_t i = orphans_.front();
      orphans_.pop_front();
      Node& ni = nodes_[i];
      const bool sink = ni.is_sink;
      std::int64_t best = kNone;
      int best_d = kInfDist;
      for (std::int64_t a0 = ni.first; a0 >= 0; a0 = next_[static_cast<std::size_t>(a0)]) {
        const auto a0u = static_cast<std::size_t>(a0);
        if (cap_[sink ? a0u : sister(a0u)] <= kEps) continue;
        const std::size_t j = head_[a0u];
        if (nodes_[j].is_sink != sink || nodes_[j].parent == kNone) continue;
        int d = origin_distance(j);
        if (d == kInfDist) continue;
        if (d < best_d) {
          best = a0;
          best_d = d;
        }
        for (std::size_t k = j; nodes_[k].ts != time_; k = head(nodes_[k].parent)) {
          nodes_[k].ts = time_;
          nodes_[k].dist = d--;
        }
      }
      ni.parent = best;
      if (best != kNone) {
        ni.ts = time_;
        ni.dist = best_d + 1;
        continue;
      }
      for (std::int64_t a0 = ni.first; a0 >= 0; a0 = next_[static_cast<std::size_t>(a0)]) {
        const auto a0u = static_cast<std::size_t>(a0);
        const std::size_t j = head_[a0u];
        Node& nj = nodes_[j];
        if (nj.is_sink != sink || nj.parent == kNone) continue;
        if (cap_[sink ? a0u : sister(a0u)] > kEps) set_active(j);
        if (nj.parent != kTerminal && nj.parent != kOrphan && head(nj.parent) == i) make_orphan(j);
      }
    }
  }

  std::vector<Node> nodes_;
  std::vector<std::uint32_t> head_;
  std::vector<std::int64_t> next_;
  std::vector<double> cap_;
  std::deque<std::size_t> active_;
  std::deque<std::size_t> orphans_;
  double flow_ = 0.0;
  int time_ = 0;
};

}  // namespace patchflow
