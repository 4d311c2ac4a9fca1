// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
//
//   acceptance [--seed N] [--epochs N] [--report DIR]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "narstar/dataset.hpp"
#include "narstar/eval.hpp"
#include "narstar/parallel.hpp"
#include "narstar/training.hpp"
#include "support.hpp"

using namespace narstar;
using namespace narstar::testing;

namespace {

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

int failures = 0;

void verdict(int id, bool pass, const std::string& what, const std::string& detail) {
  if (!pass) ++failures;
  std::printf("%s criterion %d: %s | %s\n", pass ? "PASS" : "FAIL", id, what.c_str(), detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::size_t instance_size(std::uint64_t i) { return 8 + static_cast<std::size_t>(i % 8) * 16; }

void zero_field_equivalence(std::uint64_t seed) {
  const Timer timer;
  std::size_t matched = 0;
  for (std::uint64_t i = 0; i < 1000; ++i) {
    const auto inst = random_instance(derive_seed(seed, i), instance_size(i), family_at(i));
    const auto d = dijkstra(inst);
    const auto a = astar(inst, HeuristicField::zeros(inst.graph.node_count()));
    matched += a.cost == d.cost && a.iterations == d.iterations;
  }
  const double t = timer.seconds();
  verdict(1, matched == 1000 && t < 60.0, "zero field A* equals early-stopped Dijkstra",
          fmt("%zu/1000 identical cost and iterations, %.1f s", matched, t));
}

void consistency_implies_optimality(std::uint64_t seed) {
  const Timer timer;
  std::size_t ok = 0, total = 0;
  for (std::uint64_t i = 0; i < 500; ++i) {
    const auto inst = random_instance(derive_seed(seed, i), instance_size(i), family_at(i));
    const auto d = bellman_ford(inst.graph, inst.source);
    const double optimal = dijkstra(inst).cost;
    for (double alpha : {0.0, 0.25, 0.5, 1.0}) {
      HeuristicField field{d};
      for (auto& y : field.values) y = std::isfinite(y) ? alpha * y : 0.0;
      const bool consistent = check_constraints(inst.graph, field).satisfied_fraction == 1.0;
      const bool optimal_found = std::abs(astar(inst, field).cost - optimal) <= kConstraintTolerance;
      ok += consistent && optimal_found;
      ++total;
    }
  }
  const double t = timer.seconds();
  verdict(2, ok == total && t < 60.0, "alpha * d(s, .) fields are consistent and optimal",
          fmt("%zu/%zu (instance, alpha) pairs, %.1f s", ok, total, t));
}

void gradient_checks(std::uint64_t seed) {
  const Timer timer;
  GradientCheck total;
  for (std::uint64_t i = 0; i < 100; ++i) {
    Rng rng(derive_seed(seed, i));
    ModelConfig config;
    config.hidden_dim = 2 + rng.below(5);
    config.mlp_hidden = 2 + rng.below(5);
    config.mlp_layers = 2 + rng.below(2);
    config.seed = rng.next_u64();
    const LossOptions loss{.lambda = std::exp(rng.uniform(std::log(1e-3), 0.0)), .hinge_penalty = rng.below(2) == 1};
    const auto inst = random_instance(rng.next_u64(), 4 + rng.below(4), family_at(i));
    const auto samples = prepare_samples({inst});
    const auto model = random_model(config, rng.next_u64());
    total.merge(model_gradient_error(model, samples[0], loss));
    total.merge(op_suite_error(rng.next_u64()));
  }
  const double t = timer.seconds();
  const bool kinks_rare = total.kinks * 100 <= total.checked;
  verdict(3, total.worst < 1e-4 && kinks_rare && t < 300.0,
          "central finite differences (step 1e-5) on joint loss and ops",
          fmt("max relative error %.3g over %zu entries in 100 configurations, %zu entries straddling a kink, %.1f s",
              total.worst, total.checked, total.kinks, t));
}

void trace_oracle(std::uint64_t seed) {
  std::size_t ok = 0;
  for (std::uint64_t i = 0; i < 1000; ++i) {
    const auto inst = random_instance(derive_seed(seed, i), instance_size(i), family_at(i));
    const auto trace = dijkstra_trace(inst);
    const auto oracle = bellman_ford(inst.graph, inst.source);
    bool good = trace.distances == oracle;
    const auto& pred = trace.final_predecessors();
    for (NodeId v = 0; good && v < inst.graph.node_count(); ++v) {
      if (!std::isfinite(oracle[v])) continue;
      std::vector<NodeId> path{v};
      while (path.back() != inst.source && path.size() <= inst.graph.node_count()) path.push_back(pred[path.back()]);
      if (path.back() != inst.source) {
        good = false;
        break;
      }
      std::reverse(path.begin(), path.end());
      good = path_cost(inst.graph, path) == oracle[v];
    }
    ok += good;
  }
  verdict(8, ok == 1000, "Dijkstra trace matches Bellman-Ford; predecessor tree is exact",
          fmt("%zu/1000 instances", ok));
}

const MetricRow& row_of(const EvalReport& r, const std::string& family, std::size_t n, HeuristicSource s) {
  for (const auto& row : r.rows) {
    if (row.family == family && row.node_count == n && row.source == s) return row;
  }
  throw std::logic_error("missing row " + family + "/" + std::to_string(n));
}

}  // namespace

int main(int argc, char** argv) {
  std::uint64_t seed = 0;
  std::size_t epochs = 100;
  std::filesystem::path report_dir = "acceptance_report";
  for (int i = 1; i + 1 < argc; i += 2) {
    if (!std::strcmp(argv[i], "--seed")) seed = std::strtoull(argv[i + 1], nullptr, 10);
    else if (!std::strcmp(argv[i], "--epochs")) epochs = std::strtoull(argv[i + 1], nullptr, 10);
    else if (!std::strcmp(argv[i], "--report")) report_dir = argv[i + 1];
  }
  std::printf("acceptance suite, master seed %llu, %s\n", static_cast<unsigned long long>(seed),
              hardware_description().c_str());

  zero_field_equivalence(derive_seed(seed, "c1"));
  consistency_implies_optimality(derive_seed(seed, "c2"));
  gradient_checks(derive_seed(seed, "c3"));
  trace_oracle(derive_seed(seed, "c8"));

  // Train on the dense 16-node split with the default configuration.
  const Timer train_timer;
  const auto specs = training_split_specs();
  const auto train_set = prepare_samples(build_split(specs[0], seed).instances);
  const auto val_set = prepare_samples(build_split(specs[1], seed).instances);
  ModelConfig config;
  config.seed = derive_seed(seed, "model");
  TrainOptions options;
  options.max_epochs = epochs;
  options.on_epoch = [](const nlohmann::json& j) {
    std::printf("  epoch %zu: train %.4f, validation constraints %.4f, score %.4f\n", j.at("epoch").get<std::size_t>(),
                j.at("train").at("total").get<double>(),
                j.at("validation").at("constraint_fraction").get<double>(),
                j.at("validation").at("score").get<double>());
    std::fflush(stdout);
  };
  const auto trained = train(config, train_set, val_set, options);
  const double train_seconds = train_timer.seconds();
  std::printf("  trained %zu epochs in %.0f s, best epoch %zu\n", trained.report.epochs.size(), train_seconds,
              trained.report.best_epoch);

  std::vector<Split> splits;
  for (auto& spec : test_split_specs({DensityFamily::sparse, DensityFamily::dense})) {
    const auto n = spec.distribution.node_count;
    if (spec.name.find("sparse") != std::string::npos && n > 96) continue;
    splits.push_back(build_split(spec, seed));
  }
  EvalOptions eval_options;
  eval_options.sources = {HeuristicSource::learnt, HeuristicSource::random};
  eval_options.trials = 5;
  eval_options.timing_repetitions = 5;
  eval_options.seed = seed;
  eval_options.threads = default_threads();
  eval_options.checkpoint = "acceptance";
  const Timer eval_timer;
  const auto report = evaluate(std::span(&trained.model, 1), splits, eval_options);
  std::printf("  evaluated %zu splits in %.0f s\n", splits.size(), eval_timer.seconds());
  std::filesystem::create_directories(report_dir);
  emit_report(report, report_dir);
  trained.model.save(report_dir / "model.ckpt", {{"seed", seed}});

  const auto L = HeuristicSource::learnt;
  const auto R = HeuristicSource::random;
  {
    bool pass = train_seconds <= 1800.0;
    std::string detail;
    for (std::size_t n : {16, 32, 64, 96}) {
      const double c = row_of(report, "dense", n, L).constraints.mean;
      pass &= c >= 0.95;
      detail += fmt("n=%zu %.4f; ", n, c);
    }
    verdict(4, pass, "dense constraint fraction >= 0.95 on sizes 16-96",
            detail + fmt("training %.0f s", train_seconds));
  }
  {
    const auto& r96 = row_of(report, "dense", 96, L);
    const auto& r256 = row_of(report, "dense", 256, L);
    const double q96 = r96.iterations_astar.mean / r96.iterations_dijkstra;
    const double q256 = r256.iterations_astar.mean / r256.iterations_dijkstra;
    verdict(5, q96 <= 0.67 && q256 <= 0.5, "A*/Dijkstra iteration ratio (dense 96 <= 0.67, dense 256 <= 0.5)",
            fmt("n=96 %.2f/%.2f = %.3f; n=256 %.2f/%.2f = %.3f", r96.iterations_astar.mean, r96.iterations_dijkstra,
                q96, r256.iterations_astar.mean, r256.iterations_dijkstra, q256));
  }
  {
    bool pass = true;
    std::string detail;
    for (std::size_t n : {16, 32, 64, 96}) {
      const double d = row_of(report, "sparse", n, L).relative_distance.mean;
      pass &= d <= 0.02;
      detail += fmt("n=%zu %.5f; ", n, d);
    }
    verdict(6, pass, "sparse relative distance <= 2% on sizes 16-96", detail);
  }
  {
    bool pass = true;
    std::string detail;
    for (std::size_t n : {96, 128, 160, 192, 224, 256}) {
      const auto& l = row_of(report, "dense", n, L);
      const auto& r = row_of(report, "dense", n, R);
      pass &= l.relative_distance.mean < r.relative_distance.mean && l.iterations_astar.mean < r.iterations_astar.mean;
      detail += fmt("n=%zu dist %.4f<%.4f iters %.1f<%.1f; ", n, l.relative_distance.mean, r.relative_distance.mean,
                    l.iterations_astar.mean, r.iterations_astar.mean);
    }
    verdict(7, pass, "learnt beats the U[0,1] baseline on dense >= 96 (5 seeds)", detail);
  }
  {
    bool pass = true;
    std::string detail;
    for (std::size_t n : {192, 224, 256}) {
      const auto& l = row_of(report, "dense", n, L);
      pass &= l.speedup > 1.0;
      detail += fmt("n=%zu %.3f (dijkstra %.2f us, inference %.2f us, A* %.2f us); ", n, l.speedup,
                    l.time_dijkstra * 1e6, l.time_heuristic * 1e6, l.time_astar * 1e6);
    }
    verdict(9, pass, "wall-clock speedup > 1 on dense 192-256", detail);
  }

  std::printf("%d criteria failed; report in %s\n", failures, report_dir.string().c_str());
  return failures == 0 ? 0 : 1;
}
