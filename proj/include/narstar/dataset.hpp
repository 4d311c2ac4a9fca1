#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "narstar/graph.hpp"

namespace narstar {

/// Graph sizes of the nine generalisation test splits.
inline constexpr std::array<std::size_t, 9> kTestSizes{16, 32, 64, 96, 128, 160, 192, 224, 256};

inline constexpr std::size_t kTrainCount = 1000;
inline constexpr std::size_t kValidationCount = 128;
inline constexpr std::size_t kTestCount = 128;
inline constexpr std::size_t kMaxGraphRetries = 100;

/// Recipe for one split. `distribution.seed` is ignored; seeds are derived
/// from the master seed and the split name.
struct SplitSpec {
  std::string name;
  DistributionConfig distribution;
  std::size_t count = 0;
};

struct Split {
  SplitSpec spec;
  std::uint64_t master_seed = 0;
  std::vector<ProblemInstance> instances;
};

/// Seed derivation, documented in the README:
///   split seed    = derive_seed(master, split name)
///   graph seed    = derive_seed(derive_seed(split seed, index), attempt)
///   instance seed = derive_seed(graph seed, "instance")
/// Attempts advance only when a graph has no reachable pair.
std::uint64_t graph_seed(std::uint64_t master_seed, const std::string& split_name,
                         std::size_t index, std::size_t attempt);

/// Throws NoReachablePair after kMaxGraphRetries failed attempts for one slot.
Split build_split(const SplitSpec& spec, std::uint64_t master_seed);
std::vector<Split> build_dataset(const std::vector<SplitSpec>& specs, std::uint64_t master_seed);

std::string test_split_name(DensityFamily family, std::size_t node_count);

/// Train (1000) and validation (128) splits on 16-node dense graphs.
std::vector<SplitSpec> training_split_specs(double weight_low = 0.2, double weight_high = 1.0);
/// Nine 128-graph test splits per requested family.
std::vector<SplitSpec> test_split_specs(const std::vector<DensityFamily>& families,
                                        double weight_low = 0.2, double weight_high = 1.0);

/// File name for a split ("test/dense/96" -> "test_dense_96.nsd").
std::string split_file_name(const std::string& split_name);

/// Binary split file; layout documented in the README. Throws FormatError
/// or ChecksumMismatch on load.
void save_split(const Split& split, const std::filesystem::path& path);
Split load_split(const std::filesystem::path& path);

}  // namespace narstar
