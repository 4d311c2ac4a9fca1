#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "narstar/dataset.hpp"
#include "narstar/model.hpp"
#include "narstar/search.hpp"

namespace narstar {

/// Where the A* field comes from.
enum class HeuristicSource { learnt, zero, random };

std::string source_name(HeuristicSource source);
HeuristicSource parse_source(const std::string& name);

struct Stat {
  double mean = 0.0;
  double stderr_ = 0.0;  // standard error of the mean across instances
};

/// Mean and standard error (sample standard deviation / sqrt(n)); zero error
/// for fewer than two values.
Stat summarize(std::span<const double> values);

struct MetricRow {
  std::string family;
  std::size_t node_count = 0;
  HeuristicSource source = HeuristicSource::learnt;
  Stat constraints;
  double path_accuracy = 0.0;
  Stat relative_distance;
  Stat iterations_astar;
  double iterations_dijkstra = 0.0;
  double speedup = 0.0;
  // Mean per-instance medians, seconds.
  double time_heuristic = 0.0;
  double time_astar = 0.0;
  double time_dijkstra = 0.0;
  std::size_t instances = 0;
  std::size_t excluded = 0;  // unreachable targets

  nlohmann::json to_json() const;
  static MetricRow from_json(const nlohmann::json& j);
};

struct EvalReport {
  std::vector<MetricRow> rows;
  std::size_t trials = 0;
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> trial_seeds;
  std::string checkpoint;
  std::string hardware;
  std::size_t timing_repetitions = 0;

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
};

class OptimalCostZero : public std::invalid_argument {
 public:
  OptimalCostZero() : std::invalid_argument("optimal path cost is zero") {}
};

/// Raised when a search beats Dijkstra: the optimality oracle is broken.
class OracleInconsistency : public std::logic_error {
 public:
  OracleInconsistency(double found, double optimal);
};

/// (c(found) - c(optimal)) / c(optimal), clamped at 0 inside the 1e-9 tolerance.
double compute_relative_distance(const SearchOutcome& found, const SearchOutcome& optimal);

/// "model name" from /proc/cpuinfo plus the hardware thread count.
std::string hardware_description();

struct EvalOptions {
  std::vector<HeuristicSource> sources{HeuristicSource::learnt, HeuristicSource::zero,
                                       HeuristicSource::random};
  std::size_t trials = 5;
  std::size_t timing_repetitions = 5;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::string checkpoint;  // recorded in the report
  std::function<void(const std::string&)> warn;
};

/// Runs every source on every split for `options.trials` trials and averages
/// the per-split means across trials. `models` holds either one model (reused
/// by every trial) or one model per trial; it may be empty when the learnt
/// source is not requested.
EvalReport evaluate(std::span<const NarModel> models, const std::vector<Split>& splits,
                    const EvalOptions& options);

/// Writes table.csv (one row per MetricRow), series.csv (node_count, value,
/// error triples per family, source and metric) and report.json into `dir`.
/// Output depends only on the report.
void emit_report(const EvalReport& report, const std::filesystem::path& dir);

/// The table and series contents as strings (used by emit_report).
std::string render_table(const EvalReport& report);
std::string render_series(const EvalReport& report);

}  // namespace narstar
