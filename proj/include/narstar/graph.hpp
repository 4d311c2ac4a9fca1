#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "narstar/rng.hpp"

namespace narstar {

using NodeId = std::uint32_t;

/// Undirected edge, stored once with u < v.
struct Edge {
  NodeId u = 0;
  NodeId v = 0;
  double weight = 0.0;

  friend bool operator==(const Edge&, const Edge&) = default;
};

/// One direction of an undirected edge.
struct Arc {
  NodeId src = 0;
  NodeId dst = 0;
  double weight = 0.0;
};

/// Weighted undirected simple graph.
///
/// Every edge {u, v} appears as the two arcs (u, v) and (v, u) sharing one
/// weight. Arcs are grouped by source node (CSR), and within a node sorted by
/// destination id, so `neighbors(v)` is both the outgoing and (mirrored) the
/// incoming arc set of v.
class Graph {
 public:
  Graph() = default;

  /// Throws std::invalid_argument on self-loops, duplicate edges,
  /// out-of-range ids or non-positive / non-finite weights.
  Graph(std::size_t node_count, std::vector<Edge> edges);

  std::size_t node_count() const noexcept { return node_count_; }
  std::size_t edge_count() const noexcept { return edges_.size(); }
  std::size_t arc_count() const noexcept { return arcs_.size(); }

  /// Undirected edges, sorted lexicographically by (u, v).
  std::span<const Edge> edges() const noexcept { return edges_; }
  std::span<const Arc> arcs() const noexcept { return arcs_; }
  std::span<const Arc> neighbors(NodeId v) const noexcept {
    return {arcs_.data() + offsets_[v], arcs_.data() + offsets_[v + 1]};
  }
  std::size_t degree(NodeId v) const noexcept { return offsets_[v + 1] - offsets_[v]; }
  /// Smallest / largest edge weight (0 for an edgeless graph).
  double min_weight() const noexcept { return min_weight_; }
  double max_weight() const noexcept { return max_weight_; }

  /// Connected-component label per node (labels are 0..k-1 in order of the
  /// smallest node id of each component).
  std::vector<std::uint32_t> components() const;

  friend bool operator==(const Graph& a, const Graph& b) {
    return a.node_count_ == b.node_count_ && a.edges_ == b.edges_;
  }

 private:
  std::size_t node_count_ = 0;
  std::vector<Edge> edges_;
  std::vector<Arc> arcs_;
  std::vector<std::size_t> offsets_{0};
  double min_weight_ = 0.0;
  double max_weight_ = 0.0;
};

/// A shortest-path query: graph plus distinct, mutually reachable s and t.
struct ProblemInstance {
  Graph graph;
  NodeId source = 0;
  NodeId target = 0;

  /// Throws std::invalid_argument unless source != target, both in range and
  /// target reachable from source.
  void validate() const;

  friend bool operator==(const ProblemInstance&, const ProblemInstance&) = default;
};

/// Edge-probability rule for Erdős–Rényi sampling.
struct EdgeRule {
  enum class Kind { fixed, log_n_over_n };
  Kind kind = Kind::fixed;
  double p = 0.0;  // used when kind == fixed

  static EdgeRule fixed(double p) { return {Kind::fixed, p}; }
  static EdgeRule log_n_over_n() { return {Kind::log_n_over_n, 0.0}; }

  /// Probability for a graph with `node_count` nodes, clamped to [0, 1].
  double resolve(std::size_t node_count) const;

  std::string to_string() const;
  static EdgeRule parse(const std::string& text);

  friend bool operator==(const EdgeRule&, const EdgeRule&) = default;
};

/// The three density families used for evaluation.
enum class DensityFamily { sparse, dense, very_dense };

EdgeRule family_rule(DensityFamily family);
std::string family_name(DensityFamily family);
DensityFamily parse_family(const std::string& name);

struct DistributionConfig {
  std::size_t node_count = 16;
  EdgeRule edge_rule = EdgeRule::fixed(0.35);
  double weight_low = 0.2;
  double weight_high = 1.0;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument when the invariants do not hold.
  void validate() const;
};

class NoReachablePair : public std::runtime_error {
 public:
  NoReachablePair() : std::runtime_error("graph has no reachable pair of distinct nodes") {}
};

/// Erdős–Rényi G(n, p) with uniform weights. Pairs (i, j), i < j, are visited
/// in lexicographic order; each draws one uniform for inclusion and, when
/// included, one for its weight. Deterministic in `config.seed`.
Graph generate_graph(const DistributionConfig& config);

/// Uniform ordered pair (s, t), s != t, with t reachable from s.
ProblemInstance sample_instance(Graph graph, std::uint64_t seed);

}  // namespace narstar
