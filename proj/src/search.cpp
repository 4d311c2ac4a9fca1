#include "narstar/search.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <queue>

namespace narstar {

namespace {

using QueueEntry = std::pair<double, NodeId>;
using MinQueue = std::priority_queue<QueueEntry, std::vector<QueueEntry>, std::greater<>>;

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<NodeId> walk_back(const std::vector<NodeId>& pred, NodeId source, NodeId target) {
  std::vector<NodeId> path{target};
  for (NodeId v = target; v != source; v = pred[v]) path.push_back(pred[v]);
  std::reverse(path.begin(), path.end());
  return path;
}

/// Shared best-first loop. `offset[v]` is subtracted from g(v) to form the key;
/// an empty offset means plain Dijkstra.
SearchOutcome best_first(const ProblemInstance& instance, const std::vector<double>* offset,
                         const SearchOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  const Graph& graph = instance.graph;
  const auto n = graph.node_count();
  std::vector<double> g(n, kInf);
  std::vector<NodeId> pred(n);
  std::vector<char> closed(n, 0);
  auto key = [&](NodeId v) { return offset ? g[v] - (*offset)[v] : g[v]; };

  SearchOutcome out;
  MinQueue queue;
  g[instance.source] = 0.0;
  pred[instance.source] = instance.source;
  queue.emplace(key(instance.source), instance.source);
  bool reached = false;
  while (!queue.empty()) {
    const auto [k, u] = queue.top();
    queue.pop();
    if (closed[u]) continue;
    closed[u] = 1;
    ++out.iterations;
    if (options.record_pops) out.pop_priorities.push_back(k);
    if (u == instance.target) {
      reached = true;
      break;
    }
    for (const Arc& a : graph.neighbors(u)) {
      if (closed[a.dst]) continue;
      const double candidate = g[u] + a.weight;
      if (candidate < g[a.dst]) {
        g[a.dst] = candidate;
        pred[a.dst] = u;
        queue.emplace(key(a.dst), a.dst);
      }
    }
  }
  if (!reached) throw Unreachable();
  out.expanded = out.iterations;
  out.path = walk_back(pred, instance.source, instance.target);
  out.cost = path_cost(graph, out.path);
  out.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

}  // namespace

bool HeuristicField::finite() const {
  return std::all_of(values.begin(), values.end(), [](double y) { return std::isfinite(y); });
}

DijkstraTrace dijkstra_trace(const ProblemInstance& instance) {
  const Graph& graph = instance.graph;
  const auto n = graph.node_count();
  DijkstraTrace trace;
  trace.distances.assign(n, kInf);
  std::vector<NodeId> pred(n);
  for (NodeId v = 0; v < n; ++v) pred[v] = v;
  std::vector<char> closed(n, 0);

  MinQueue queue;
  trace.distances[instance.source] = 0.0;
  queue.emplace(0.0, instance.source);
  while (!queue.empty()) {
    const auto [d, u] = queue.top();
    queue.pop();
    if (closed[u]) continue;
    closed[u] = 1;
    for (const Arc& a : graph.neighbors(u)) {
      if (closed[a.dst]) continue;
      const double candidate = d + a.weight;
      if (candidate < trace.distances[a.dst]) {
        trace.distances[a.dst] = candidate;
        pred[a.dst] = u;
        queue.emplace(candidate, a.dst);
      }
    }
    trace.steps.push_back({u, pred});
  }
  return trace;
}

SearchOutcome dijkstra(const ProblemInstance& instance, const SearchOptions& options) {
  return best_first(instance, nullptr, options);
}

SearchOutcome astar(const ProblemInstance& instance, const HeuristicField& field,
                    const SearchOptions& options) {
  if (field.values.size() != instance.graph.node_count()) {
    throw std::invalid_argument("heuristic field size does not match graph");
  }
  return best_first(instance, &field.values, options);
}

ConstraintReport check_constraints(const Graph& graph, const HeuristicField& field) {
  if (field.values.size() != graph.node_count()) {
    throw std::invalid_argument("heuristic field size does not match graph");
  }
  ConstraintReport report;
  report.arc_count = graph.arc_count();
  const auto& y = field.values;
  for (const Arc& a : graph.arcs()) {
    const double margin = (y[a.dst] - y[a.src]) - a.weight;
    if (margin > kConstraintTolerance) report.violations.push_back({a, margin});
  }
  if (report.arc_count > 0) {
    report.satisfied_fraction =
        static_cast<double>(report.arc_count - report.violations.size()) /
        static_cast<double>(report.arc_count);
  }
  return report;
}

double path_cost(const Graph& graph, const std::vector<NodeId>& path) {
  double cost = 0.0;
  for (std::size_t i = 1; i < path.size(); ++i) {
    const auto nbrs = graph.neighbors(path[i - 1]);
    const auto it = std::lower_bound(nbrs.begin(), nbrs.end(), path[i],
                                     [](const Arc& a, NodeId v) { return a.dst < v; });
    if (it == nbrs.end() || it->dst != path[i]) {
      throw std::invalid_argument("path uses a missing edge");
    }
    cost += it->weight;
  }
  return cost;
}

}  // namespace narstar
