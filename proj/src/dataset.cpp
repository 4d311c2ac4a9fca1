#include "narstar/dataset.hpp"

#include <json.hpp>

#include "narstar/binary_io.hpp"

namespace narstar {

namespace {

constexpr std::string_view kSplitMagic = "NSTRDSET";
constexpr std::uint32_t kSplitFormatVersion = 1;

nlohmann::json spec_to_json(const SplitSpec& spec, std::uint64_t master_seed) {
  return {
      {"split", spec.name},
      {"count", spec.count},
      {"node_count", spec.distribution.node_count},
      {"edge_rule", spec.distribution.edge_rule.to_string()},
      {"weight_low", spec.distribution.weight_low},
      {"weight_high", spec.distribution.weight_high},
      {"master_seed", master_seed},
  };
}

}  // namespace

std::uint64_t graph_seed(std::uint64_t master_seed, const std::string& split_name,
                         std::size_t index, std::size_t attempt) {
  return derive_seed(derive_seed(derive_seed(master_seed, split_name), index), attempt);
}

Split build_split(const SplitSpec& spec, std::uint64_t master_seed) {
  spec.distribution.validate();
  Split split{spec, master_seed, {}};
  split.instances.reserve(spec.count);
  for (std::size_t i = 0; i < spec.count; ++i) {
    bool done = false;
    for (std::size_t attempt = 0; attempt < kMaxGraphRetries && !done; ++attempt) {
      auto config = spec.distribution;
      config.seed = graph_seed(master_seed, spec.name, i, attempt);
      try {
        split.instances.push_back(
            sample_instance(generate_graph(config), derive_seed(config.seed, "instance")));
        done = true;
      } catch (const NoReachablePair&) {
      }
    }
    if (!done) throw NoReachablePair();
  }
  return split;
}

std::vector<Split> build_dataset(const std::vector<SplitSpec>& specs, std::uint64_t master_seed) {
  std::vector<Split> out;
  out.reserve(specs.size());
  for (const auto& spec : specs) out.push_back(build_split(spec, master_seed));
  return out;
}

std::string test_split_name(DensityFamily family, std::size_t node_count) {
  return "test/" + family_name(family) + "/" + std::to_string(node_count);
}

std::vector<SplitSpec> training_split_specs(double weight_low, double weight_high) {
  DistributionConfig dist{16, family_rule(DensityFamily::dense), weight_low, weight_high, 0};
  return {{"train", dist, kTrainCount}, {"val", dist, kValidationCount}};
}

std::vector<SplitSpec> test_split_specs(const std::vector<DensityFamily>& families,
                                        double weight_low, double weight_high) {
  std::vector<SplitSpec> specs;
  for (auto family : families) {
    for (auto n : kTestSizes) {
      DistributionConfig dist{n, family_rule(family), weight_low, weight_high, 0};
      specs.push_back({test_split_name(family, n), dist, kTestCount});
    }
  }
  return specs;
}

std::string split_file_name(const std::string& split_name) {
  std::string out = split_name;
  for (auto& c : out) {
    if (c == '/') c = '_';
  }
  return out + ".nsd";
}

void save_split(const Split& split, const std::filesystem::path& path) {
  ByteWriter w;
  w.bytes(kSplitMagic);
  w.u32(kSplitFormatVersion);
  w.string(spec_to_json(split.spec, split.master_seed).dump());
  w.u64(split.instances.size());
  for (const auto& inst : split.instances) {
    w.u32(static_cast<std::uint32_t>(inst.graph.node_count()));
    w.u32(inst.source);
    w.u32(inst.target);
    w.u64(inst.graph.edge_count());
    for (const auto& e : inst.graph.edges()) {
      w.u32(e.u);
      w.u32(e.v);
      w.f64(e.weight);
    }
  }
  w.seal();
  write_file(path, w.buffer());
}

Split load_split(const std::filesystem::path& path) {
  ByteReader r(read_file(path), path.string());
  r.verify_seal();
  if (r.bytes(kSplitMagic.size()) != kSplitMagic) r.fail("not a split file");
  if (const auto version = r.u32(); version != kSplitFormatVersion) {
    r.fail("unsupported split format version " + std::to_string(version));
  }
  Split split;
  try {
    const auto header = nlohmann::json::parse(r.string());
    split.spec.name = header.at("split").get<std::string>();
    split.spec.count = header.at("count").get<std::size_t>();
    split.spec.distribution.node_count = header.at("node_count").get<std::size_t>();
    split.spec.distribution.edge_rule = EdgeRule::parse(header.at("edge_rule").get<std::string>());
    split.spec.distribution.weight_low = header.at("weight_low").get<double>();
    split.spec.distribution.weight_high = header.at("weight_high").get<double>();
    split.master_seed = header.at("master_seed").get<std::uint64_t>();
  } catch (const std::exception& e) {
    r.fail(std::string("bad header: ") + e.what());
  }
  const auto count = r.u64();
  if (count != split.spec.count) r.fail("instance count disagrees with header");
  split.instances.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto n = r.u32();
    const auto s = r.u32();
    const auto t = r.u32();
    const auto m = r.u64();
    std::vector<Edge> edges;
    edges.reserve(m);
    for (std::uint64_t k = 0; k < m; ++k) {
      Edge e;
      e.u = r.u32();
      e.v = r.u32();
      e.weight = r.f64();
      edges.push_back(e);
    }
    try {
      ProblemInstance inst{Graph(n, std::move(edges)), s, t};
      inst.validate();
      split.instances.push_back(std::move(inst));
    } catch (const std::invalid_argument& e) {
      r.fail("instance " + std::to_string(i) + ": " + e.what());
    }
  }
  if (!r.at_end()) r.fail("trailing bytes after last instance");
  return split;
}

}  // namespace narstar
