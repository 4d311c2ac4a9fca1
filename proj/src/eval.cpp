#include "narstar/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <thread>

#include "narstar/binary_io.hpp"
#include "narstar/heuristic_kernel.hpp"
#include "narstar/parallel.hpp"
#include "narstar/rng.hpp"

namespace narstar {

namespace {

constexpr double kCostTolerance = 1e-9;
constexpr int kReportVersion = 1;

double median(std::vector<double> samples) {
  std::sort(samples.begin(), samples.end());
  const auto k = samples.size();
  return k % 2 == 1 ? samples[k / 2] : 0.5 * (samples[k / 2 - 1] + samples[k / 2]);
}

template <typename T>
void do_not_optimize(const T& value) {
  asm volatile("" : : "g"(value) : "memory");
}

std::string family_label(const SplitSpec& spec) {
  for (auto f : {DensityFamily::sparse, DensityFamily::dense, DensityFamily::very_dense}) {
    if (family_rule(f) == spec.distribution.edge_rule) return family_name(f);
  }
  return "p=" + spec.distribution.edge_rule.to_string();
}

HeuristicField random_field(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  HeuristicField field;
  field.values.resize(n);
  for (auto& y : field.values) y = rng.uniform();
  return field;
}

struct InstanceResult {
  bool excluded = false;
  double constraints = 0.0;
  bool optimal = false;
  double relative_distance = 0.0;
  double iterations_astar = 0.0;
  double iterations_dijkstra = 0.0;
  double time_heuristic = 0.0;
  double time_astar = 0.0;
  double time_dijkstra = 0.0;
};

MetricRow aggregate(const std::vector<InstanceResult>& results) {
  MetricRow row;
  std::vector<double> constraints, relative, iterations;
  double dijkstra_iterations = 0.0, optimal = 0.0;
  double t_heuristic = 0.0, t_astar = 0.0, t_dijkstra = 0.0;
  for (const auto& r : results) {
    if (r.excluded) {
      ++row.excluded;
      continue;
    }
    constraints.push_back(r.constraints);
    relative.push_back(r.relative_distance);
    iterations.push_back(r.iterations_astar);
    dijkstra_iterations += r.iterations_dijkstra;
    optimal += r.optimal ? 1.0 : 0.0;
    t_heuristic += r.time_heuristic;
    t_astar += r.time_astar;
    t_dijkstra += r.time_dijkstra;
  }
  row.instances = constraints.size();
  row.constraints = summarize(constraints);
  row.relative_distance = summarize(relative);
  row.iterations_astar = summarize(iterations);
  if (row.instances > 0) {
    const auto k = static_cast<double>(row.instances);
    row.iterations_dijkstra = dijkstra_iterations / k;
    row.path_accuracy = optimal / k;
    row.time_heuristic = t_heuristic / k;
    row.time_astar = t_astar / k;
    row.time_dijkstra = t_dijkstra / k;
    const double denominator = t_heuristic + t_astar;
    row.speedup = denominator > 0.0 ? t_dijkstra / denominator : 0.0;
  }
  return row;
}

std::string format_number(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

nlohmann::json stat_json(const Stat& s) { return {{"mean", s.mean}, {"stderr", s.stderr_}}; }
Stat stat_from(const nlohmann::json& j) { return {j.at("mean").get<double>(), j.at("stderr").get<double>()}; }

}  // namespace

std::string source_name(HeuristicSource source) {
  switch (source) {
    case HeuristicSource::learnt: return "learnt";
    case HeuristicSource::zero: return "zero";
    case HeuristicSource::random: return "random";
  }
  throw std::invalid_argument("unknown heuristic source");
}

HeuristicSource parse_source(const std::string& name) {
  if (name == "learnt") return HeuristicSource::learnt;
  if (name == "zero") return HeuristicSource::zero;
  if (name == "random") return HeuristicSource::random;
  throw std::invalid_argument("unknown heuristic source '" + name + "'");
}

Stat summarize(std::span<const double> values) {
  Stat s;
  if (values.empty()) return s;
  const auto k = static_cast<double>(values.size());
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / k;
  if (values.size() < 2) return s;
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.stderr_ = std::sqrt(ss / (k - 1.0)) / std::sqrt(k);
  return s;
}

nlohmann::json MetricRow::to_json() const {
  return {{"family", family},
          {"node_count", node_count},
          {"source", source_name(source)},
          {"constraints", stat_json(constraints)},
          {"path_accuracy", path_accuracy},
          {"relative_distance", stat_json(relative_distance)},
          {"iterations_astar", stat_json(iterations_astar)},
          {"iterations_dijkstra", iterations_dijkstra},
          {"speedup", speedup},
          {"time_heuristic", time_heuristic},
          {"time_astar", time_astar},
          {"time_dijkstra", time_dijkstra},
          {"instances", instances},
          {"excluded", excluded}};
}

MetricRow MetricRow::from_json(const nlohmann::json& j) {
  MetricRow r;
  r.family = j.at("family").get<std::string>();
  r.node_count = j.at("node_count").get<std::size_t>();
  r.source = parse_source(j.at("source").get<std::string>());
  r.constraints = stat_from(j.at("constraints"));
  r.path_accuracy = j.at("path_accuracy").get<double>();
  r.relative_distance = stat_from(j.at("relative_distance"));
  r.iterations_astar = stat_from(j.at("iterations_astar"));
  r.iterations_dijkstra = j.at("iterations_dijkstra").get<double>();
  r.speedup = j.at("speedup").get<double>();
  r.time_heuristic = j.at("time_heuristic").get<double>();
  r.time_astar = j.at("time_astar").get<double>();
  r.time_dijkstra = j.at("time_dijkstra").get<double>();
  r.instances = j.at("instances").get<std::size_t>();
  r.excluded = j.at("excluded").get<std::size_t>();
  return r;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const auto& r : rows) rows_json.push_back(r.to_json());
  return {{"version", kReportVersion},
          {"trials", trials},
          {"seed", seed},
          {"trial_seeds", trial_seeds},
          {"checkpoint", checkpoint},
          {"hardware", hardware},
          {"timing_repetitions", timing_repetitions},
          {"rows", rows_json}};
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
  if (j.value("version", 0) != kReportVersion) throw std::invalid_argument("unsupported report version");
  EvalReport r;
  r.trials = j.at("trials").get<std::size_t>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.trial_seeds = j.at("trial_seeds").get<std::vector<std::uint64_t>>();
  r.checkpoint = j.at("checkpoint").get<std::string>();
  r.hardware = j.at("hardware").get<std::string>();
  r.timing_repetitions = j.at("timing_repetitions").get<std::size_t>();
  for (const auto& row : j.at("rows")) r.rows.push_back(MetricRow::from_json(row));
  return r;
}

OracleInconsistency::OracleInconsistency(double found, double optimal)
    : std::logic_error("search found cost " + format_number(found) + " below the Dijkstra optimum " +
                       format_number(optimal)) {}

double compute_relative_distance(const SearchOutcome& found, const SearchOutcome& optimal) {
  if (!(optimal.cost > 0.0)) throw OptimalCostZero();
  if (found.cost < optimal.cost - kCostTolerance) throw OracleInconsistency(found.cost, optimal.cost);
  return std::max(0.0, (found.cost - optimal.cost) / optimal.cost);
}

std::string hardware_description() {
  std::string model = "unknown cpu";
  std::ifstream in("/proc/cpuinfo");
  for (std::string line; std::getline(in, line);) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) {
        model = line.substr(colon + 1);
        model.erase(0, model.find_first_not_of(' '));
      }
      break;
    }
  }
  return model + ", " + std::to_string(std::thread::hardware_concurrency()) + " hardware threads";
}

EvalReport evaluate(std::span<const NarModel> models, const std::vector<Split>& splits,
                    const EvalOptions& options) {
  const bool wants_learnt = std::find(options.sources.begin(), options.sources.end(),
                                      HeuristicSource::learnt) != options.sources.end();
  if (options.trials == 0) throw std::invalid_argument("at least one trial is required");
  if (wants_learnt && models.size() != 1 && models.size() != options.trials) {
    throw std::invalid_argument("need one model or one model per trial");
  }

  EvalReport report;
  report.trials = options.trials;
  report.seed = options.seed;
  report.checkpoint = options.checkpoint;
  report.hardware = hardware_description();
  report.timing_repetitions = options.timing_repetitions;
  for (std::size_t t = 0; t < options.trials; ++t) {
    report.trial_seeds.push_back(derive_seed(derive_seed(options.seed, "trial"), t));
  }

  std::vector<HeuristicKernel> kernels;
  if (wants_learnt) {
    for (const auto& m : models) kernels.emplace_back(m);
  }

  const auto sources = options.sources.size();
  // trial rows indexed [split][source][trial]
  std::vector<std::vector<std::vector<MetricRow>>> per_trial(
      splits.size(), std::vector<std::vector<MetricRow>>(sources));

  for (std::size_t trial = 0; trial < options.trials; ++trial) {
    const HeuristicKernel* kernel = nullptr;
    if (wants_learnt) kernel = &kernels[kernels.size() == 1 ? 0 : trial];
    for (std::size_t si = 0; si < splits.size(); ++si) {
      const auto& split = splits[si];
      const auto split_seed = derive_seed(report.trial_seeds[trial], split.spec.name);
      std::vector<std::vector<InstanceResult>> results(sources,
                                                       std::vector<InstanceResult>(split.instances.size()));
      std::vector<std::string> warnings(split.instances.size());

      const auto count = split.instances.size();
      std::vector<std::vector<HeuristicField>> fields(sources, std::vector<HeuristicField>(count));
      auto make_field = [&](std::size_t k, std::size_t i) {
        const auto& instance = split.instances[i];
        switch (options.sources[k]) {
          case HeuristicSource::learnt:
            return kernel->infer(instance);
          case HeuristicSource::zero:
            return HeuristicField::zeros(instance.graph.node_count());
          case HeuristicSource::random:
            break;
        }
        return random_field(instance.graph.node_count(), derive_seed(split_seed, i));
      };

      parallel_for(count, options.threads, [&](std::size_t i) {
        const auto& instance = split.instances[i];
        SearchOutcome optimal;
        try {
          optimal = dijkstra(instance);
        } catch (const Unreachable&) {
          warnings[i] = split.spec.name + " instance " + std::to_string(i) + ": target unreachable, excluded";
          for (auto& r : results) r[i].excluded = true;
          return;
        }
        for (std::size_t k = 0; k < sources; ++k) {
          fields[k][i] = make_field(k, i);
          const SearchOutcome found = astar(instance, fields[k][i]);
          auto& r = results[k][i];
          r.constraints = check_constraints(instance.graph, fields[k][i]).satisfied_fraction;
          r.relative_distance = compute_relative_distance(found, optimal);
          r.optimal = std::abs(found.cost - optimal.cost) <= kCostTolerance;
          r.iterations_astar = static_cast<double>(found.iterations);
          r.iterations_dijkstra = static_cast<double>(optimal.iterations);
        }
      });

      // Timing runs on one thread, one pass over the split per repetition and
      // method, so that consecutive timed calls never repeat an instance.
      const auto reps = std::max<std::size_t>(options.timing_repetitions, 1);
      auto time_pass = [&](auto&& fn) {
        std::vector<std::vector<double>> samples(count);
        for (std::size_t r = 0; r <= reps; ++r) {
          for (std::size_t i = 0; i < count; ++i) {
            if (results[0][i].excluded) continue;
            const auto start = std::chrono::steady_clock::now();
            fn(i);
            const auto stop = std::chrono::steady_clock::now();
            if (r > 0) samples[i].push_back(std::chrono::duration<double>(stop - start).count());
          }
        }
        std::vector<double> medians(count, 0.0);
        for (std::size_t i = 0; i < count; ++i) {
          if (!samples[i].empty()) medians[i] = median(samples[i]);
        }
        return medians;
      };
      const auto t_dijkstra = time_pass([&](std::size_t i) { do_not_optimize(dijkstra(split.instances[i]).cost); });
      for (std::size_t k = 0; k < sources; ++k) {
        const auto t_heuristic =
            time_pass([&](std::size_t i) { do_not_optimize(make_field(k, i).values.data()); });
        const auto t_astar =
            time_pass([&](std::size_t i) { do_not_optimize(astar(split.instances[i], fields[k][i]).cost); });
        for (std::size_t i = 0; i < count; ++i) {
          results[k][i].time_heuristic = t_heuristic[i];
          results[k][i].time_astar = t_astar[i];
          results[k][i].time_dijkstra = t_dijkstra[i];
        }
      }

      if (options.warn) {
        for (const auto& w : warnings) {
          if (!w.empty()) options.warn(w);
        }
      }
      for (std::size_t k = 0; k < sources; ++k) per_trial[si][k].push_back(aggregate(results[k]));
    }
  }

  // Average split-level figures across trials.
  for (std::size_t si = 0; si < splits.size(); ++si) {
    for (std::size_t k = 0; k < sources; ++k) {
      const auto& trials = per_trial[si][k];
      MetricRow row;
      row.family = family_label(splits[si].spec);
      row.node_count = splits[si].spec.distribution.node_count;
      row.source = options.sources[k];
      const auto m = static_cast<double>(trials.size());
      auto avg = [&](auto member) {
        double s = 0.0;
        for (const auto& t : trials) s += member(t);
        return s / m;
      };
      row.constraints = {avg([](const MetricRow& t) { return t.constraints.mean; }),
                         avg([](const MetricRow& t) { return t.constraints.stderr_; })};
      row.relative_distance = {avg([](const MetricRow& t) { return t.relative_distance.mean; }),
                               avg([](const MetricRow& t) { return t.relative_distance.stderr_; })};
      row.iterations_astar = {avg([](const MetricRow& t) { return t.iterations_astar.mean; }),
                              avg([](const MetricRow& t) { return t.iterations_astar.stderr_; })};
      row.path_accuracy = avg([](const MetricRow& t) { return t.path_accuracy; });
      row.iterations_dijkstra = avg([](const MetricRow& t) { return t.iterations_dijkstra; });
      row.speedup = avg([](const MetricRow& t) { return t.speedup; });
      row.time_heuristic = avg([](const MetricRow& t) { return t.time_heuristic; });
      row.time_astar = avg([](const MetricRow& t) { return t.time_astar; });
      row.time_dijkstra = avg([](const MetricRow& t) { return t.time_dijkstra; });
      row.instances = trials.front().instances;
      row.excluded = trials.front().excluded;
      report.rows.push_back(row);
    }
  }
  return report;
}

std::string render_table(const EvalReport& report) {
  std::ostringstream out;
  out << "family,node_count,source,constraints_mean,constraints_stderr,path_accuracy,"
         "relative_distance_mean,relative_distance_stderr,iterations_astar_mean,"
         "iterations_astar_stderr,iterations_dijkstra_mean,speedup,instances,excluded\n";
  for (const auto& r : report.rows) {
    out << r.family << ',' << r.node_count << ',' << source_name(r.source) << ','
        << format_number(r.constraints.mean) << ',' << format_number(r.constraints.stderr_) << ','
        << format_number(r.path_accuracy) << ',' << format_number(r.relative_distance.mean) << ','
        << format_number(r.relative_distance.stderr_) << ',' << format_number(r.iterations_astar.mean) << ','
        << format_number(r.iterations_astar.stderr_) << ',' << format_number(r.iterations_dijkstra) << ','
        << format_number(r.speedup) << ',' << r.instances << ',' << r.excluded << '\n';
  }
  return out.str();
}

std::string render_series(const EvalReport& report) {
  struct Point {
    double y = 0.0;
    double err = 0.0;
  };
  // (metric, family, source) -> node_count -> point; std::map keeps output ordered.
  std::map<std::tuple<std::string, std::string, std::string>, std::map<std::size_t, Point>> series;
  for (const auto& r : report.rows) {
    const auto src = source_name(r.source);
    series[{"constraints", r.family, src}][r.node_count] = {r.constraints.mean, r.constraints.stderr_};
    series[{"path_accuracy", r.family, src}][r.node_count] = {r.path_accuracy, 0.0};
    series[{"relative_distance", r.family, src}][r.node_count] = {r.relative_distance.mean,
                                                                   r.relative_distance.stderr_};
    series[{"iterations", r.family, src}][r.node_count] = {r.iterations_astar.mean, r.iterations_astar.stderr_};
    series[{"iterations", r.family, "dijkstra"}].try_emplace(r.node_count, Point{r.iterations_dijkstra, 0.0});
  }
  std::ostringstream out;
  out << "metric,family,source,x,y,err\n";
  for (const auto& [key, points] : series) {
    const auto& [metric, family, source] = key;
    for (const auto& [x, p] : points) {
      out << metric << ',' << family << ',' << source << ',' << x << ',' << format_number(p.y) << ','
          << format_number(p.err) << '\n';
    }
  }
  return out.str();
}

void emit_report(const EvalReport& report, const std::filesystem::path& dir) {
  write_text_file(dir / "table.csv", render_table(report));
  write_text_file(dir / "series.csv", render_series(report));
  write_text_file(dir / "report.json", report.to_json().dump(2) + "\n");
}

}  // namespace narstar
