#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <queue>
#include <set>

#include "narstar/binary_io.hpp"
#include "narstar/dataset.hpp"
#include "narstar/graph.hpp"
#include "narstar/rng.hpp"

using namespace narstar;

namespace {

DistributionConfig config_for(std::size_t n, EdgeRule rule, std::uint64_t seed) {
  DistributionConfig c;
  c.node_count = n;
  c.edge_rule = rule;
  c.seed = seed;
  return c;
}

// Independent SplitMix64 / FNV-1a reference for the seed derivation.
std::uint64_t ref_mix(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t ref_fnv(const std::string& s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) h = (h ^ c) * 1099511628211ULL;
  return h;
}

std::uint64_t ref_derive(std::uint64_t parent, std::uint64_t index) {
  return ref_mix(ref_mix(parent) ^ ref_mix(index + 0x632be59bd9b4e019ULL));
}

std::vector<bool> bfs_reachable(const Graph& g, NodeId s) {
  std::vector<bool> seen(g.node_count(), false);
  std::queue<NodeId> q;
  q.push(s);
  seen[s] = true;
  while (!q.empty()) {
    const NodeId u = q.front();
    q.pop();
    for (const Edge& e : g.edges()) {
      const NodeId other = e.u == u ? e.v : e.v == u ? e.u : u;
      if (other != u && !seen[other]) seen[other] = true, q.push(other);
    }
  }
  return seen;
}

}  // namespace

TEST(Graph, CompleteAndEmpty) {
  EXPECT_EQ(generate_graph(config_for(4, EdgeRule::fixed(1.0), 9)).edge_count(), 6u);
  EXPECT_EQ(generate_graph(config_for(4, EdgeRule::fixed(0.0), 9)).edge_count(), 0u);
}

TEST(Graph, EdgeCountMatchesBinomialMean) {
  double total = 0.0;
  for (std::uint64_t seed = 0; seed < 10000; ++seed) {
    const auto n = generate_graph(config_for(16, EdgeRule::fixed(0.35), seed)).edge_count();
    if (seed == 0) {
      EXPECT_GE(n, 10u);
      EXPECT_LE(n, 75u);
    }
    total += static_cast<double>(n);
  }
  EXPECT_NEAR(total / 10000.0, 0.35 * 120.0, 1.0);
}

TEST(Graph, MirrorArcsAndWeightBounds) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Graph g = generate_graph(config_for(20, EdgeRule::fixed(0.4), seed));
    ASSERT_EQ(g.arc_count(), 2 * g.edge_count());
    for (const Arc& a : g.arcs()) {
      EXPECT_GE(a.weight, 0.2);
      EXPECT_LE(a.weight, 1.0);
      const auto back = g.neighbors(a.dst);
      const auto it = std::find_if(back.begin(), back.end(), [&](const Arc& b) { return b.dst == a.src; });
      ASSERT_NE(it, back.end());
      EXPECT_EQ(it->weight, a.weight);
    }
    if (g.edge_count() > 0) {
      double lo = 2.0, hi = 0.0;
      for (const Edge& e : g.edges()) lo = std::min(lo, e.weight), hi = std::max(hi, e.weight);
      EXPECT_EQ(g.min_weight(), lo);
      EXPECT_EQ(g.max_weight(), hi);
    }
  }
}

TEST(Graph, GenerationIsDeterministic) {
  const auto c = config_for(32, EdgeRule::log_n_over_n(), 1234);
  const Graph a = generate_graph(c);
  const Graph b = generate_graph(c);
  EXPECT_EQ(a, b);
  for (std::size_t i = 0; i < a.edge_count(); ++i) {
    EXPECT_EQ(std::bit_cast<std::uint64_t>(a.edges()[i].weight), std::bit_cast<std::uint64_t>(b.edges()[i].weight));
  }
}

TEST(Graph, ConstructorRejectsMalformedEdges) {
  EXPECT_THROW(Graph(3, {{1, 1, 0.5}}), std::invalid_argument);
  EXPECT_THROW(Graph(3, {{0, 1, 0.5}, {1, 0, 0.7}}), std::invalid_argument);
  EXPECT_THROW(Graph(3, {{0, 3, 0.5}}), std::invalid_argument);
  EXPECT_THROW(Graph(3, {{0, 1, 0.0}}), std::invalid_argument);
  EXPECT_THROW(Graph(3, {{0, 1, -1.0}}), std::invalid_argument);
  EXPECT_THROW(Graph(3, {{0, 1, std::nan("")}}), std::invalid_argument);
}

TEST(Graph, Components) {
  const Graph g(5, {{0, 1, 1.0}, {3, 4, 1.0}});
  EXPECT_EQ(g.components(), (std::vector<std::uint32_t>{0, 0, 1, 2, 2}));
}

TEST(Graph, SparseRule) {
  EXPECT_NEAR(EdgeRule::log_n_over_n().resolve(32), std::log(32.0) / 32.0, 1e-15);
  EXPECT_NEAR(EdgeRule::log_n_over_n().resolve(32), 0.108, 5e-4);
  EXPECT_EQ(family_rule(DensityFamily::dense), EdgeRule::fixed(0.35));
  EXPECT_EQ(family_rule(DensityFamily::very_dense), EdgeRule::fixed(0.5));
  EXPECT_EQ(EdgeRule::parse(EdgeRule::log_n_over_n().to_string()), EdgeRule::log_n_over_n());
  EXPECT_EQ(EdgeRule::parse(EdgeRule::fixed(0.35).to_string()), EdgeRule::fixed(0.35));
}

TEST(Graph, DistributionValidation) {
  auto c = config_for(4, EdgeRule::fixed(0.5), 0);
  c.weight_low = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.weight_low = 2.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = config_for(0, EdgeRule::fixed(0.5), 0);
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = config_for(4, EdgeRule::fixed(1.5), 0);
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Instance, PathGraphPair) {
  const Graph path(3, {{0, 1, 0.5}, {1, 2, 0.5}});
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto inst = sample_instance(path, seed);
    EXPECT_NE(inst.source, inst.target);
    EXPECT_NO_THROW(inst.validate());
  }
}

TEST(Instance, EmptyGraphHasNoPair) {
  EXPECT_THROW(sample_instance(Graph(4, {}), 0), NoReachablePair);
}

TEST(Instance, PairNeverStraddlesComponents) {
  const Graph g(4, {{0, 1, 0.5}, {2, 3, 0.5}});
  std::set<std::pair<NodeId, NodeId>> seen;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const auto inst = sample_instance(g, seed);
    EXPECT_TRUE(bfs_reachable(g, inst.source)[inst.target]);
    seen.insert({inst.source, inst.target});
  }
  EXPECT_EQ(seen.size(), 4u);
}

TEST(Instance, ValidateRejectsBadPairs) {
  const Graph g(4, {{0, 1, 0.5}, {2, 3, 0.5}});
  EXPECT_THROW((ProblemInstance{g, 0, 0}.validate()), std::invalid_argument);
  EXPECT_THROW((ProblemInstance{g, 0, 2}.validate()), std::invalid_argument);
  EXPECT_THROW((ProblemInstance{g, 0, 7}.validate()), std::invalid_argument);
}

TEST(Seeds, DerivationMatchesReference) {
  EXPECT_EQ(derive_seed(7, std::uint64_t{3}), ref_derive(7, 3));
  EXPECT_EQ(derive_seed(7, "train"), ref_derive(7, ref_fnv("train")));
  const auto split = ref_derive(7, ref_fnv("test/dense/96"));
  EXPECT_EQ(graph_seed(7, "test/dense/96", 5, 2), ref_derive(ref_derive(split, 5), 2));
}

TEST(Dataset, TrainingSpecs) {
  const auto specs = training_split_specs();
  ASSERT_EQ(specs.size(), 2u);
  EXPECT_EQ(specs[0].count, 1000u);
  EXPECT_EQ(specs[1].count, 128u);
  for (const auto& s : specs) {
    EXPECT_EQ(s.distribution.node_count, 16u);
    EXPECT_EQ(s.distribution.edge_rule, EdgeRule::fixed(0.35));
  }
  const Split train = build_split(specs[0], 42);
  ASSERT_EQ(train.instances.size(), 1000u);
  for (const auto& inst : train.instances) {
    EXPECT_EQ(inst.graph.node_count(), 16u);
    EXPECT_NO_THROW(inst.validate());
  }
}

TEST(Dataset, TestSpecs) {
  const auto specs = test_split_specs({DensityFamily::sparse, DensityFamily::dense, DensityFamily::very_dense});
  ASSERT_EQ(specs.size(), 27u);
  std::set<std::string> names;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    EXPECT_EQ(specs[i].count, 128u);
    EXPECT_EQ(specs[i].distribution.node_count, kTestSizes[i % 9]);
    names.insert(specs[i].name);
  }
  EXPECT_EQ(names.size(), 27u);
  EXPECT_TRUE(names.count(test_split_name(DensityFamily::sparse, 256)));
  EXPECT_EQ(split_file_name("test/dense/96"), "test_dense_96.nsd");
}

TEST(Dataset, SparseSlotsAreReachableAndDeterministic) {
  SplitSpec spec{"test/sparse/32", {}, 64};
  spec.distribution.node_count = 32;
  spec.distribution.edge_rule = EdgeRule::log_n_over_n();
  const Split a = build_split(spec, 3);
  const Split b = build_split(spec, 3);
  ASSERT_EQ(a.instances.size(), 64u);
  EXPECT_EQ(a.instances, b.instances);
  for (const auto& inst : a.instances) EXPECT_NO_THROW(inst.validate());
  EXPECT_NE(build_split(spec, 4).instances, a.instances);
}

TEST(Dataset, FileRoundTripAndCorruption) {
  SplitSpec spec{"test/very-dense/16", {}, 5};
  spec.distribution.node_count = 16;
  spec.distribution.edge_rule = EdgeRule::fixed(0.5);
  const Split split = build_split(spec, 11);
  const auto path = std::filesystem::temp_directory_path() / "narstar_split_roundtrip.nsd";
  save_split(split, path);
  const Split loaded = load_split(path);
  EXPECT_EQ(loaded.spec.name, split.spec.name);
  EXPECT_EQ(loaded.spec.count, split.spec.count);
  EXPECT_EQ(loaded.spec.distribution.edge_rule, split.spec.distribution.edge_rule);
  EXPECT_EQ(loaded.master_seed, 11u);
  EXPECT_EQ(loaded.instances, split.instances);

  auto bytes = read_file(path);
  bytes[bytes.size() / 2] ^= 0x01;
  write_file(path, bytes);
  EXPECT_THROW(load_split(path), ChecksumMismatch);

  bytes[0] = 'X';
  write_file(path, bytes);
  EXPECT_THROW(load_split(path), std::runtime_error);
  std::filesystem::remove(path);
  EXPECT_THROW(load_split(path), std::runtime_error);
}
