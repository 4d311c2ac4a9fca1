#pragma once

#include <stdexcept>
#include <vector>

#include "narstar/graph.hpp"

namespace narstar {

/// Predecessor array after one node has been finalized (and its arcs relaxed).
/// Nodes not reached yet point to themselves.
struct DijkstraStep {
  NodeId finalized = 0;
  std::vector<NodeId> predecessors;
};

/// Full (not early-stopped) Dijkstra execution from the source.
struct DijkstraTrace {
  std::vector<DijkstraStep> steps;  // one per reachable node, in finalization order
  std::vector<double> distances;    // +inf for unreachable nodes

  std::size_t length() const noexcept { return steps.size(); }
  const std::vector<NodeId>& final_predecessors() const { return steps.back().predecessors; }
};

/// Per-node score y_v; high values mark nodes that are good to route through.
/// A* uses the remaining-cost estimate y_target - y_v.
struct HeuristicField {
  std::vector<double> values;

  static HeuristicField zeros(std::size_t n) { return {std::vector<double>(n, 0.0)}; }
  bool finite() const;
};

struct SearchOutcome {
  std::vector<NodeId> path;  // source .. target
  double cost = 0.0;
  std::size_t iterations = 0;  // fresh pops, target pop included
  std::size_t expanded = 0;    // settled nodes
  double wall_time = 0.0;      // seconds
  std::vector<double> pop_priorities;  // only filled when requested
};

struct SearchOptions {
  bool record_pops = false;
};

class Unreachable : public std::runtime_error {
 public:
  Unreachable() : std::runtime_error("target not reachable from source") {}
};

/// Runs Dijkstra to exhaustion of the source's component. Ties in the queue go
/// to the smaller node id; relaxation only on strict improvement.
DijkstraTrace dijkstra_trace(const ProblemInstance& instance);

/// Dijkstra stopped when the target is popped. Throws Unreachable.
SearchOutcome dijkstra(const ProblemInstance& instance, const SearchOptions& options = {});

/// Best-first search ordered by g(v) - y_v, which yields the same pop order as
/// g(v) + (y_target - y_v). Lazy reinsertion, no reopening of settled nodes.
/// Throws Unreachable, or std::invalid_argument if the field has the wrong size.
SearchOutcome astar(const ProblemInstance& instance, const HeuristicField& field,
                    const SearchOptions& options = {});

inline constexpr double kConstraintTolerance = 1e-9;

struct ConstraintViolation {
  Arc arc;
  double margin = 0.0;  // (y_dst - y_src) - weight, > tolerance
};

struct ConstraintReport {
  double satisfied_fraction = 1.0;
  std::size_t arc_count = 0;
  std::vector<ConstraintViolation> violations;
};

/// Checks y_v - y_u <= w_uv over every directed arc (u, v).
ConstraintReport check_constraints(const Graph& graph, const HeuristicField& field);

/// Sum of arc weights along a node path. Throws std::invalid_argument if two
/// consecutive nodes are not adjacent.
double path_cost(const Graph& graph, const std::vector<NodeId>& path);

}  // namespace narstar
