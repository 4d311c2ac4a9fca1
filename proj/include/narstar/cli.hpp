#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "narstar/model.hpp"

namespace narstar {

inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitDivergence = 4;

inline constexpr int kRunConfigVersion = 1;

/// Bad flags, bad config files, inconsistent requests.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Missing or unreadable datasets and checkpoints.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Every setting of a run. Loaded from a JSON config file (unknown keys are
/// rejected), then overridden by flags; the resolved copy is written next to
/// the outputs of every command.
struct RunConfig {
  std::uint64_t seed = 0;
  std::size_t threads = 0;  // 0: available parallelism
  std::string data_dir;     // empty: $NARSTAR_DATA_DIR, else "data"

  struct Data {
    std::vector<std::string> families{"sparse", "dense", "very-dense"};
    std::vector<std::size_t> sizes;  // empty: all nine test sizes
    double weight_low = 0.2;
    double weight_high = 1.0;
  } data;

  /// The model seed is not configurable: it is derived from `seed`.
  ModelConfig model;

  struct Train {
    std::size_t batch_size = 32;
    std::size_t max_epochs = 100;
    std::size_t patience = 10;
    bool hinge_penalty = false;
  } train;

  struct Sweep {
    int level = 1;
    std::size_t budget = 200;
    std::size_t max_epochs = 10;
    std::size_t patience = 5;
  } sweep;

  struct Evaluate {
    std::string checkpoint;
    std::vector<std::string> heuristics{"learnt", "zero", "random"};
    std::size_t trials = 5;
    std::size_t timing_repetitions = 5;
    bool retrain_per_trial = true;
  } evaluate;

  nlohmann::json to_json() const;
  /// Throws UsageError on unknown keys, wrong types or a version mismatch.
  static RunConfig from_json(const nlohmann::json& j);
};

/// Entry point of the `narstar` binary: parses `args` (without the program
/// name), runs the subcommand and maps failures to exit codes
/// (2 usage, 3 data or checkpoint, 4 divergence, 1 anything else).
int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace narstar
