#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "narstar/binary_io.hpp"
#include "narstar/eval.hpp"
#include "support.hpp"

using namespace narstar;
using narstar::testing::random_model;

namespace {

Split small_split(DensityFamily family, std::size_t n, std::size_t count, std::uint64_t seed) {
  SplitSpec spec{test_split_name(family, n), {}, count};
  spec.distribution.node_count = n;
  spec.distribution.edge_rule = family_rule(family);
  return build_split(spec, seed);
}

SearchOutcome with_cost(double c) {
  SearchOutcome o;
  o.cost = c;
  return o;
}

NarModel small_model(double scale = 0.5) {
  ModelConfig c;
  c.hidden_dim = 4;
  c.mlp_hidden = 4;
  return random_model(c, 21, scale);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t line_count(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST(RelativeDistance, Arithmetic) {
  EXPECT_EQ(compute_relative_distance(with_cost(2.0), with_cost(2.0)), 0.0);
  EXPECT_DOUBLE_EQ(compute_relative_distance(with_cost(3.0), with_cost(2.0)), 0.5);
  EXPECT_EQ(compute_relative_distance(with_cost(2.0 - 1e-12), with_cost(2.0)), 0.0);
  EXPECT_THROW(compute_relative_distance(with_cost(1.9), with_cost(2.0)), OracleInconsistency);
  EXPECT_THROW(compute_relative_distance(with_cost(1.0), with_cost(0.0)), OptimalCostZero);
}

TEST(Summary, MeanAndStandardError) {
  const std::vector<double> v{1.0, 2.0, 3.0};
  const auto s = summarize(v);
  EXPECT_DOUBLE_EQ(s.mean, 2.0);
  EXPECT_DOUBLE_EQ(s.stderr_, 1.0 / std::sqrt(3.0));
  EXPECT_EQ(summarize(std::vector<double>{4.0}).stderr_, 0.0);
}

TEST(Sources, NamesRoundTrip) {
  for (auto s : {HeuristicSource::learnt, HeuristicSource::zero, HeuristicSource::random}) {
    EXPECT_EQ(parse_source(source_name(s)), s);
  }
  EXPECT_THROW(parse_source("oracle"), std::invalid_argument);
}

TEST(Evaluate, ZeroSourceIsDijkstra) {
  const std::vector<Split> splits{small_split(DensityFamily::sparse, 64, 30, 1),
                                  small_split(DensityFamily::very_dense, 32, 30, 1)};
  EvalOptions options;
  options.sources = {HeuristicSource::zero};
  options.trials = 2;
  options.timing_repetitions = 1;
  const auto report = evaluate({}, splits, options);
  ASSERT_EQ(report.rows.size(), 2u);
  for (const auto& row : report.rows) {
    EXPECT_EQ(row.relative_distance.mean, 0.0);
    EXPECT_EQ(row.path_accuracy, 1.0);
    EXPECT_EQ(row.constraints.mean, 1.0);
    EXPECT_EQ(row.iterations_astar.mean, row.iterations_dijkstra);
    EXPECT_EQ(row.instances, 30u);
    EXPECT_GE(row.iterations_astar.mean, 1.0);
  }
  EXPECT_EQ(report.rows[0].family, "sparse");
  EXPECT_EQ(report.rows[1].family, "very-dense");
}

TEST(Evaluate, RandomBaselineIsSuboptimalOnDenseGraphs) {
  const std::vector<Split> splits{small_split(DensityFamily::dense, 96, 128, 2)};
  EvalOptions options;
  options.sources = {HeuristicSource::random};
  options.trials = 1;
  options.timing_repetitions = 1;
  const auto row = evaluate({}, splits, options).rows.at(0);
  EXPECT_GT(row.relative_distance.mean, 0.0);
  EXPECT_LT(row.path_accuracy, 1.0);
  EXPECT_LT(row.constraints.mean, 1.0);
}

TEST(Evaluate, TrialsVaryOnlyTheRandomBaseline) {
  const std::vector<Split> splits{small_split(DensityFamily::dense, 32, 40, 3)};
  const auto model = small_model();
  EvalOptions options;
  options.trials = 3;
  options.timing_repetitions = 1;
  options.seed = 9;
  const auto report = evaluate(std::span(&model, 1), splits, options);
  ASSERT_EQ(report.trial_seeds.size(), 3u);
  EXPECT_NE(report.trial_seeds[0], report.trial_seeds[1]);
  EXPECT_EQ(report.trial_seeds[2], derive_seed(derive_seed(9, "trial"), std::uint64_t{2}));

  EvalOptions one = options;
  one.trials = 1;
  const auto single = evaluate(std::span(&model, 1), splits, one);
  // Learnt metrics are identical trial to trial; their average equals one trial.
  EXPECT_DOUBLE_EQ(report.rows[0].constraints.mean, single.rows[0].constraints.mean);
  EXPECT_DOUBLE_EQ(report.rows[0].iterations_astar.mean, single.rows[0].iterations_astar.mean);
}

TEST(Evaluate, ConstraintFractionMatchesIndependentCheck) {
  const std::vector<Split> splits{small_split(DensityFamily::dense, 48, 10, 4)};
  const auto model = small_model(3.0);
  EvalOptions options;
  options.sources = {HeuristicSource::learnt};
  options.trials = 1;
  options.timing_repetitions = 1;
  const auto row = evaluate(std::span(&model, 1), splits, options).rows.at(0);
  double total = 0.0;
  double rel = 0.0;
  for (const auto& inst : splits[0].instances) {
    const auto field = model.infer_heuristic(inst);
    total += check_constraints(inst.graph, field).satisfied_fraction;
    rel += compute_relative_distance(astar(inst, field), dijkstra(inst));
  }
  EXPECT_NEAR(row.constraints.mean, total / 10.0, 1e-12);
  EXPECT_NEAR(row.relative_distance.mean, rel / 10.0, 1e-12);
  EXPECT_LT(row.constraints.mean, 1.0);
}

TEST(Evaluate, SpeedupIncludesInferenceTime) {
  const std::vector<Split> splits{small_split(DensityFamily::dense, 64, 20, 5)};
  const auto model = small_model();
  EvalOptions options;
  options.trials = 1;
  options.timing_repetitions = 3;
  for (const auto& row : evaluate(std::span(&model, 1), splits, options).rows) {
    EXPECT_GT(row.time_dijkstra, 0.0);
    EXPECT_GT(row.time_astar, 0.0);
    EXPECT_NEAR(row.speedup, row.time_dijkstra / (row.time_heuristic + row.time_astar), 1e-9 * row.speedup);
  }
}

TEST(Evaluate, UnreachableInstancesAreExcludedWithWarning) {
  auto split = small_split(DensityFamily::dense, 16, 4, 6);
  split.instances.push_back({Graph(4, {{0, 1, 0.5}, {2, 3, 0.5}}), 0, 3});
  EvalOptions options;
  options.sources = {HeuristicSource::zero, HeuristicSource::random};
  options.trials = 1;
  options.timing_repetitions = 1;
  std::vector<std::string> warnings;
  options.warn = [&](const std::string& w) { warnings.push_back(w); };
  const auto report = evaluate({}, {split}, options);
  for (const auto& row : report.rows) {
    EXPECT_EQ(row.instances, 4u);
    EXPECT_EQ(row.excluded, 1u);
  }
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find("instance 4"), std::string::npos);
}

TEST(Evaluate, RejectsBadModelCounts) {
  const std::vector<Split> splits{small_split(DensityFamily::dense, 16, 2, 7)};
  const auto model = small_model();
  const std::vector<NarModel> two{model, model};
  EvalOptions options;
  options.trials = 3;
  EXPECT_THROW(evaluate({}, splits, options), std::invalid_argument);
  EXPECT_THROW(evaluate(two, splits, options), std::invalid_argument);
  options.trials = 0;
  EXPECT_THROW(evaluate(std::span(&model, 1), splits, options), std::invalid_argument);
}

TEST(Report, EmptySweepIsHeaderOnly) {
  const EvalReport empty;
  EXPECT_EQ(line_count(render_table(empty)), 1u);
  EXPECT_EQ(render_table(empty).rfind("family,node_count,source,", 0), 0u);
  EXPECT_EQ(render_series(empty), "metric,family,source,x,y,err\n");
}

TEST(Report, FullSweepHasEightyOneRowsAndReemitsIdentically) {
  std::vector<Split> splits;
  for (const auto& spec : test_split_specs({DensityFamily::sparse, DensityFamily::dense, DensityFamily::very_dense})) {
    SplitSpec tiny = spec;
    tiny.count = 2;
    splits.push_back(build_split(tiny, 8));
  }
  const auto model = small_model();
  EvalOptions options;
  options.trials = 1;
  options.timing_repetitions = 1;
  options.checkpoint = "memory";
  const auto report = evaluate(std::span(&model, 1), splits, options);
  ASSERT_EQ(report.rows.size(), 81u);
  EXPECT_EQ(line_count(render_table(report)), 82u);
  // 4 metrics x 3 sources + Dijkstra iterations, per family and size.
  EXPECT_EQ(line_count(render_series(report)), 1u + 13u * 27u);

  const auto base = std::filesystem::temp_directory_path() / "narstar_report_test";
  std::filesystem::remove_all(base);
  std::filesystem::create_directories(base / "a");
  std::filesystem::create_directories(base / "b");
  emit_report(report, base / "a");
  emit_report(EvalReport::from_json(nlohmann::json::parse(slurp(base / "a" / "report.json"))), base / "b");
  for (const char* f : {"table.csv", "series.csv", "report.json"}) {
    EXPECT_EQ(slurp(base / "a" / f), slurp(base / "b" / f)) << f;
  }
  std::filesystem::remove_all(base);
}

TEST(Report, RejectsUnknownVersion) {
  auto j = EvalReport{}.to_json();
  j["version"] = 2;
  EXPECT_THROW(EvalReport::from_json(j), std::invalid_argument);
}
