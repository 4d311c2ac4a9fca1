#include "narstar/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace narstar {

Graph::Graph(std::size_t node_count, std::vector<Edge> edges)
    : node_count_(node_count), edges_(std::move(edges)) {
  for (auto& e : edges_) {
    if (e.u >= node_count_ || e.v >= node_count_) {
      throw std::invalid_argument("edge endpoint out of range");
    }
    if (e.u == e.v) throw std::invalid_argument("self-loop on node " + std::to_string(e.u));
    if (!(e.weight > 0.0) || !std::isfinite(e.weight)) {
      throw std::invalid_argument("edge weights must be positive and finite");
    }
    if (e.u > e.v) std::swap(e.u, e.v);
  }
  std::sort(edges_.begin(), edges_.end(),
            [](const Edge& a, const Edge& b) { return a.u != b.u ? a.u < b.u : a.v < b.v; });
  for (std::size_t i = 1; i < edges_.size(); ++i) {
    if (edges_[i].u == edges_[i - 1].u && edges_[i].v == edges_[i - 1].v) {
      throw std::invalid_argument("parallel edge between " + std::to_string(edges_[i].u) +
                                  " and " + std::to_string(edges_[i].v));
    }
  }

  if (!edges_.empty()) {
    const auto [lo, hi] = std::minmax_element(edges_.begin(), edges_.end(), [](const Edge& a, const Edge& b) {
      return a.weight < b.weight;
    });
    min_weight_ = lo->weight;
    max_weight_ = hi->weight;
  }

  std::vector<std::size_t> degree(node_count_, 0);
  for (const auto& e : edges_) {
    ++degree[e.u];
    ++degree[e.v];
  }
  offsets_.assign(node_count_ + 1, 0);
  for (std::size_t v = 0; v < node_count_; ++v) offsets_[v + 1] = offsets_[v] + degree[v];
  arcs_.resize(offsets_.back());
  std::vector<std::size_t> cursor(offsets_.begin(), offsets_.end() - 1);
  for (const auto& e : edges_) {
    arcs_[cursor[e.u]++] = Arc{e.u, e.v, e.weight};
    arcs_[cursor[e.v]++] = Arc{e.v, e.u, e.weight};
  }
  for (std::size_t v = 0; v < node_count_; ++v) {
    std::sort(arcs_.begin() + static_cast<std::ptrdiff_t>(offsets_[v]),
              arcs_.begin() + static_cast<std::ptrdiff_t>(offsets_[v + 1]),
              [](const Arc& a, const Arc& b) { return a.dst < b.dst; });
  }
}

std::vector<std::uint32_t> Graph::components() const {
  constexpr auto unset = static_cast<std::uint32_t>(-1);
  std::vector<std::uint32_t> label(node_count_, unset);
  std::vector<NodeId> stack;
  std::uint32_t next = 0;
  for (NodeId root = 0; root < node_count_; ++root) {
    if (label[root] != unset) continue;
    label[root] = next;
    stack.push_back(root);
    while (!stack.empty()) {
      const NodeId u = stack.back();
      stack.pop_back();
      for (const auto& a : neighbors(u)) {
        if (label[a.dst] == unset) {
          label[a.dst] = next;
          stack.push_back(a.dst);
        }
      }
    }
    ++next;
  }
  return label;
}

void ProblemInstance::validate() const {
  const auto n = graph.node_count();
  if (source >= n || target >= n) throw std::invalid_argument("source/target out of range");
  if (source == target) throw std::invalid_argument("source and target coincide");
  const auto comp = graph.components();
  if (comp[source] != comp[target]) throw std::invalid_argument("target unreachable from source");
}

double EdgeRule::resolve(std::size_t node_count) const {
  double p = this->p;
  if (kind == Kind::log_n_over_n) {
    p = node_count > 1 ? std::log(static_cast<double>(node_count)) / static_cast<double>(node_count)
                       : 1.0;
  }
  return std::clamp(p, 0.0, 1.0);
}

std::string EdgeRule::to_string() const {
  if (kind == Kind::log_n_over_n) return "log_n_over_n";
  std::ostringstream os;
  os.precision(17);
  os << p;
  return os.str();
}

EdgeRule EdgeRule::parse(const std::string& text) {
  if (text == "log_n_over_n") return log_n_over_n();
  std::size_t used = 0;
  double p = 0.0;
  try {
    p = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size() || !(p >= 0.0 && p <= 1.0)) {
    throw std::invalid_argument("bad edge probability '" + text + "'");
  }
  return fixed(p);
}

EdgeRule family_rule(DensityFamily family) {
  switch (family) {
    case DensityFamily::sparse: return EdgeRule::log_n_over_n();
    case DensityFamily::dense: return EdgeRule::fixed(0.35);
    case DensityFamily::very_dense: return EdgeRule::fixed(0.5);
  }
  throw std::invalid_argument("unknown density family");
}

std::string family_name(DensityFamily family) {
  switch (family) {
    case DensityFamily::sparse: return "sparse";
    case DensityFamily::dense: return "dense";
    case DensityFamily::very_dense: return "very-dense";
  }
  throw std::invalid_argument("unknown density family");
}

DensityFamily parse_family(const std::string& name) {
  if (name == "sparse") return DensityFamily::sparse;
  if (name == "dense") return DensityFamily::dense;
  if (name == "very-dense" || name == "very_dense") return DensityFamily::very_dense;
  throw std::invalid_argument("unknown density family '" + name + "'");
}

void DistributionConfig::validate() const {
  if (node_count == 0) throw std::invalid_argument("node_count must be positive");
  if (!(weight_low > 0.0) || !(weight_low <= weight_high) || !std::isfinite(weight_high)) {
    throw std::invalid_argument("weight range must satisfy 0 < low <= high");
  }
  if (edge_rule.kind == EdgeRule::Kind::fixed && !(edge_rule.p >= 0.0 && edge_rule.p <= 1.0)) {
    throw std::invalid_argument("edge probability outside [0, 1]");
  }
}

Graph generate_graph(const DistributionConfig& config) {
  config.validate();
  Rng rng(config.seed);
  const double p = config.edge_rule.resolve(config.node_count);
  std::vector<Edge> edges;
  const auto n = static_cast<NodeId>(config.node_count);
  for (NodeId i = 0; i < n; ++i) {
    for (NodeId j = i + 1; j < n; ++j) {
      if (rng.uniform() < p) edges.push_back({i, j, rng.uniform(config.weight_low, config.weight_high)});
    }
  }
  return Graph(config.node_count, std::move(edges));
}

ProblemInstance sample_instance(Graph graph, std::uint64_t seed) {
  const auto comp = graph.components();
  std::vector<std::uint64_t> comp_size;
  for (auto c : comp) {
    if (c >= comp_size.size()) comp_size.resize(c + 1, 0);
    ++comp_size[c];
  }
  // Ordered pairs per component: k (k - 1).
  std::uint64_t total = 0;
  for (auto k : comp_size) total += k * (k - 1);
  if (total == 0) throw NoReachablePair();

  Rng rng(seed);
  std::uint64_t pick = rng.below(total);
  std::uint32_t chosen = 0;
  for (; chosen < comp_size.size(); ++chosen) {
    const auto pairs = comp_size[chosen] * (comp_size[chosen] - 1);
    if (pick < pairs) break;
    pick -= pairs;
  }
  std::vector<NodeId> members;
  for (NodeId v = 0; v < comp.size(); ++v) {
    if (comp[v] == chosen) members.push_back(v);
  }
  const auto k = members.size();
  const auto s_index = pick / (k - 1);
  auto t_index = pick % (k - 1);
  if (t_index >= s_index) ++t_index;

  ProblemInstance instance{std::move(graph), members[s_index], members[t_index]};
  return instance;
}

}  // namespace narstar
