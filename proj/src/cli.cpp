#include "narstar/cli.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>

#include "narstar/binary_io.hpp"
#include "narstar/dataset.hpp"
#include "narstar/eval.hpp"
#include "narstar/parallel.hpp"
#include "narstar/training.hpp"

namespace narstar {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw UsageError(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.contains(key)) throw UsageError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read_key(const json& j, const char* key, T& target, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    target = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw UsageError(where + "." + key + ": " + e.what());
  }
}

std::string env_data_dir() {
  const char* env = std::getenv("NARSTAR_DATA_DIR");
  return env && *env ? env : "data";
}

std::size_t thread_count(const RunConfig& c) { return c.threads == 0 ? default_threads() : c.threads; }

std::vector<DensityFamily> families_of(const RunConfig& c) {
  std::vector<DensityFamily> out;
  for (const auto& name : c.data.families) {
    try {
      out.push_back(parse_family(name));
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  return out;
}

std::vector<std::size_t> sizes_of(const RunConfig& c) {
  if (c.data.sizes.empty()) return {kTestSizes.begin(), kTestSizes.end()};
  for (auto n : c.data.sizes) {
    if (std::find(kTestSizes.begin(), kTestSizes.end(), n) == kTestSizes.end()) {
      throw UsageError("test size " + std::to_string(n) + " is not one of the nine split sizes");
    }
  }
  return c.data.sizes;
}

std::vector<SplitSpec> selected_test_specs(const RunConfig& c) {
  const auto sizes = sizes_of(c);
  std::vector<SplitSpec> out;
  for (auto& spec : test_split_specs(families_of(c), c.data.weight_low, c.data.weight_high)) {
    if (std::find(sizes.begin(), sizes.end(), spec.distribution.node_count) != sizes.end()) {
      out.push_back(std::move(spec));
    }
  }
  return out;
}

Split load_data(const RunConfig& c, const std::string& split_name) {
  const auto path = fs::path(c.data_dir) / split_file_name(split_name);
  if (!fs::exists(path)) throw DataError(path.string() + ": missing split (run generate-data first)");
  return load_split(path);
}

ModelConfig resolved_model(const RunConfig& c) {
  ModelConfig m = c.model;
  m.seed = derive_seed(c.seed, "model");
  try {
    m.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return m;
}

TrainOptions train_options(const RunConfig::Train& t) {
  TrainOptions o;
  o.batch_size = t.batch_size;
  o.max_epochs = t.max_epochs;
  o.patience = t.patience;
  o.hinge_penalty = t.hinge_penalty;
  return o;
}

void write_config(const RunConfig& c, const fs::path& dir, const std::string& command) {
  json j = c.to_json();
  j["command"] = command;
  write_text_file(dir / "config.json", j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------

int run_generate(const RunConfig& c, std::ostream& out) {
  auto specs = training_split_specs(c.data.weight_low, c.data.weight_high);
  for (auto& s : selected_test_specs(c)) specs.push_back(std::move(s));
  std::vector<Split> splits(specs.size());
  parallel_for(specs.size(), thread_count(c), [&](std::size_t i) { splits[i] = build_split(specs[i], c.seed); });
  const fs::path dir = c.data_dir;
  for (const auto& split : splits) {
    const auto path = dir / split_file_name(split.spec.name);
    save_split(split, path);
    out << split.spec.name << ": " << split.instances.size() << " instances -> " << path.string() << "\n";
  }
  write_config(c, dir, "generate-data");
  return 0;
}

int run_train(const RunConfig& c, const fs::path& out_dir, std::ostream& out, std::ostream& err) {
  const auto train_set = prepare_samples(load_data(c, "train").instances);
  const auto val_set = prepare_samples(load_data(c, "val").instances);
  const auto model_config = resolved_model(c);
  write_config(c, out_dir, "train");

  auto options = train_options(c.train);
  fs::create_directories(out_dir);
  std::ofstream log(out_dir / "train_log.jsonl");
  options.on_epoch = [&](const json& record) {
    log << record.dump() << "\n" << std::flush;
    err << record.dump() << "\n";
  };
  try {
    auto result = train(model_config, train_set, val_set, options);
    result.model.save(out_dir / "model.ckpt", {{"train", c.to_json().at("train")}, {"seed", c.seed}});
    write_text_file(out_dir / "train_report.json", result.report.to_json().dump(2) + "\n");
    out << "best epoch " << result.report.best_epoch << ", validation score " << result.report.best_score << "\n";
    out << "checkpoint -> " << (out_dir / "model.ckpt").string() << "\n";
  } catch (const DivergenceDetected& e) {
    write_text_file(out_dir / "train_report.json", e.report().to_json().dump(2) + "\n");
    throw;
  }
  return 0;
}

int run_sweep(const RunConfig& c, const fs::path& out_dir, std::ostream& out, std::ostream& err) {
  const auto train_set = prepare_samples(load_data(c, "train").instances);
  const auto val_set = prepare_samples(load_data(c, "val").instances);
  write_config(c, out_dir, "sweep");

  SweepOptions options;
  options.level = c.sweep.level;
  options.budget = c.sweep.budget;
  options.seed = c.seed;
  options.threads = thread_count(c);
  options.train = train_options(c.train);
  options.train.max_epochs = c.sweep.max_epochs;
  options.train.patience = c.sweep.patience;
  fs::create_directories(out_dir);
  std::ofstream log(out_dir / "sweep_log.jsonl");
  options.on_trial = [&](const SweepEntry& entry) {
    log << entry.to_json().dump() << "\n" << std::flush;
    err << entry.to_json().dump() << "\n";
  };
  const auto entries = random_search(train_set, val_set, options);
  json all = json::array();
  for (const auto& e : entries) all.push_back(e.to_json());
  write_text_file(out_dir / "sweep.json", all.dump(2) + "\n");
  if (!entries.empty()) {
    write_text_file(out_dir / "best_model.json", entries.front().config.to_json().dump(2) + "\n");
    out << entries.size() << " trials; best score " << entries.front().score << " with "
        << entries.front().config.to_json().dump() << "\n";
  }
  return 0;
}

int run_evaluate(const RunConfig& c, const fs::path& out_dir, std::ostream& out, std::ostream& err) {
  EvalOptions options;
  options.sources.clear();
  for (const auto& h : c.evaluate.heuristics) {
    try {
      options.sources.push_back(parse_source(h));
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  options.trials = c.evaluate.trials;
  options.timing_repetitions = c.evaluate.timing_repetitions;
  options.seed = c.seed;
  options.threads = thread_count(c);
  options.checkpoint = c.evaluate.checkpoint;
  options.warn = [&](const std::string& w) { err << "warning: " << w << "\n"; };
  if (options.trials == 0) throw UsageError("--trials must be positive");

  const bool wants_learnt =
      std::find(options.sources.begin(), options.sources.end(), HeuristicSource::learnt) != options.sources.end();
  std::vector<NarModel> models;
  if (wants_learnt) {
    if (c.evaluate.checkpoint.empty()) throw UsageError("the learnt heuristic needs --checkpoint");
    std::optional<NarModel> base;
    try {
      base.emplace(NarModel::load(c.evaluate.checkpoint));
    } catch (const std::invalid_argument& e) {
      throw DataError(e.what());
    }
    if (c.evaluate.retrain_per_trial) {
      const auto train_set = prepare_samples(load_data(c, "train").instances);
      const auto val_set = prepare_samples(load_data(c, "val").instances);
      for (std::size_t t = 0; t < options.trials; ++t) {
        ModelConfig mc = base->config();
        mc.seed = derive_seed(derive_seed(c.seed, "retrain"), t);
        err << "trial " << t << ": retraining\n";
        models.push_back(train(mc, train_set, val_set, train_options(c.train)).model);
      }
    } else {
      models.push_back(std::move(*base));
    }
  }

  std::vector<Split> splits;
  for (const auto& spec : selected_test_specs(c)) splits.push_back(load_data(c, spec.name));
  write_config(c, out_dir, "evaluate");
  const auto report = evaluate(models, splits, options);
  emit_report(report, out_dir);
  out << render_table(report);
  return 0;
}

int run_report(const fs::path& input, const fs::path& out_dir, std::ostream& out) {
  EvalReport report;
  try {
    const auto bytes = read_file(input);
    report = EvalReport::from_json(json::parse(bytes.begin(), bytes.end()));
  } catch (const json::exception& e) {
    throw DataError(input.string() + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(input.string() + ": " + e.what());
  }
  emit_report(report, out_dir);
  out << render_table(report);
  return 0;
}

}  // namespace

// ---------------------------------------------------------------------------

json RunConfig::to_json() const {
  json m = model.to_json();
  m.erase("seed");
  return {{"version", kRunConfigVersion},
          {"seed", seed},
          {"threads", threads},
          {"data_dir", data_dir},
          {"data",
           {{"families", data.families},
            {"sizes", data.sizes},
            {"weight_low", data.weight_low},
            {"weight_high", data.weight_high}}},
          {"model", m},
          {"train",
           {{"batch_size", train.batch_size},
            {"max_epochs", train.max_epochs},
            {"patience", train.patience},
            {"hinge_penalty", train.hinge_penalty}}},
          {"sweep",
           {{"level", sweep.level},
            {"budget", sweep.budget},
            {"max_epochs", sweep.max_epochs},
            {"patience", sweep.patience}}},
          {"evaluate",
           {{"checkpoint", evaluate.checkpoint},
            {"heuristics", evaluate.heuristics},
            {"trials", evaluate.trials},
            {"timing_repetitions", evaluate.timing_repetitions},
            {"retrain_per_trial", evaluate.retrain_per_trial}}}};
}

RunConfig RunConfig::from_json(const json& j) {
  check_keys(j, {"version", "seed", "threads", "data_dir", "data", "model", "train", "sweep", "evaluate", "command"},
             "config");
  if (!j.contains("version") || j.at("version") != kRunConfigVersion) {
    throw UsageError("config version must be " + std::to_string(kRunConfigVersion));
  }
  RunConfig c;
  read_key(j, "seed", c.seed, "config");
  read_key(j, "threads", c.threads, "config");
  read_key(j, "data_dir", c.data_dir, "config");
  if (j.contains("data")) {
    const auto& d = j.at("data");
    check_keys(d, {"families", "sizes", "weight_low", "weight_high"}, "data");
    read_key(d, "families", c.data.families, "data");
    read_key(d, "sizes", c.data.sizes, "data");
    read_key(d, "weight_low", c.data.weight_low, "data");
    read_key(d, "weight_high", c.data.weight_high, "data");
  }
  if (j.contains("model")) {
    const auto& m = j.at("model");
    check_keys(m, {"hidden_dim", "mlp_hidden", "mlp_layers", "lambda", "learning_rate", "weight_decay"}, "model");
    try {
      c.model = ModelConfig::from_json(m);
    } catch (const std::exception& e) {
      throw UsageError(std::string("model: ") + e.what());
    }
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    check_keys(t, {"batch_size", "max_epochs", "patience", "hinge_penalty"}, "train");
    read_key(t, "batch_size", c.train.batch_size, "train");
    read_key(t, "max_epochs", c.train.max_epochs, "train");
    read_key(t, "patience", c.train.patience, "train");
    read_key(t, "hinge_penalty", c.train.hinge_penalty, "train");
  }
  if (j.contains("sweep")) {
    const auto& s = j.at("sweep");
    check_keys(s, {"level", "budget", "max_epochs", "patience"}, "sweep");
    read_key(s, "level", c.sweep.level, "sweep");
    read_key(s, "budget", c.sweep.budget, "sweep");
    read_key(s, "max_epochs", c.sweep.max_epochs, "sweep");
    read_key(s, "patience", c.sweep.patience, "sweep");
  }
  if (j.contains("evaluate")) {
    const auto& e = j.at("evaluate");
    check_keys(e, {"checkpoint", "heuristics", "trials", "timing_repetitions", "retrain_per_trial"}, "evaluate");
    read_key(e, "checkpoint", c.evaluate.checkpoint, "evaluate");
    read_key(e, "heuristics", c.evaluate.heuristics, "evaluate");
    read_key(e, "trials", c.evaluate.trials, "evaluate");
    read_key(e, "timing_repetitions", c.evaluate.timing_repetitions, "evaluate");
    read_key(e, "retrain_per_trial", c.evaluate.retrain_per_trial, "evaluate");
  }
  return c;
}

int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Learnt consistent heuristics for A*: data generation, training, sweeps and evaluation."};
  app.name("narstar");
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::optional<std::string> data_dir;
  std::optional<std::vector<std::string>> families;
  std::optional<std::vector<std::size_t>> sizes;
  app.add_option("--config", config_path, "JSON run configuration (see README)")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Master seed for every random stream");
  app.add_option("--threads", threads, "Worker threads (0 = available parallelism)");
  app.add_option("--data-dir", data_dir, "Dataset directory (default: $NARSTAR_DATA_DIR or ./data)");
  app.add_option("--families", families, "Density families: sparse, dense, very-dense")->delimiter(',');
  app.add_option("--sizes", sizes, "Subset of the test sizes 16..256")->delimiter(',');

  auto* generate = app.add_subcommand("generate-data", "Build the train, validation and test splits");

  std::string out_dir;
  auto* train_cmd = app.add_subcommand("train", "Train one configuration");
  std::optional<std::size_t> hidden, mlp_hidden, mlp_layers, batch_size, epochs, patience;
  std::optional<double> lambda, lr, weight_decay;
  bool hinge = false;
  train_cmd->add_option("--out", out_dir, "Output directory")->default_str("runs/train");
  train_cmd->add_option("--hidden", hidden, "Latent width");
  train_cmd->add_option("--mlp-hidden", mlp_hidden, "Inner width of the message and update MLPs");
  train_cmd->add_option("--mlp-layers", mlp_layers, "Linear layers per MLP");
  train_cmd->add_option("--lambda", lambda, "Weight of the squared-norm term");
  train_cmd->add_option("--lr", lr, "Adam learning rate");
  train_cmd->add_option("--weight-decay", weight_decay, "Decoupled weight decay");
  train_cmd->add_option("--batch-size", batch_size, "Instances per minibatch");
  train_cmd->add_option("--epochs", epochs, "Maximum epochs");
  train_cmd->add_option("--patience", patience, "Early-stopping patience in epochs");
  train_cmd->add_flag("--hinge-penalty", hinge, "Penalise (y_v - y_u - w) on violated arcs");

  auto* sweep_cmd = app.add_subcommand("sweep", "Random hyperparameter search");
  std::optional<int> level;
  std::optional<std::size_t> budget, sweep_epochs, sweep_patience;
  sweep_cmd->add_option("--out", out_dir, "Output directory")->default_str("runs/sweep");
  sweep_cmd->add_option("--level", level, "1: wide ranges, 2: refined ranges")->check(CLI::Range(1, 2));
  sweep_cmd->add_option("--budget", budget, "Number of sampled configurations");
  sweep_cmd->add_option("--epochs", sweep_epochs, "Epoch budget per trial");
  sweep_cmd->add_option("--patience", sweep_patience, "Early-stopping patience per trial");

  auto* eval_cmd = app.add_subcommand("evaluate", "Evaluate heuristics on the test splits");
  std::optional<std::string> checkpoint;
  std::optional<std::vector<std::string>> heuristics;
  std::optional<std::size_t> trials, reps;
  std::optional<bool> retrain;
  eval_cmd->add_option("--out", out_dir, "Output directory")->default_str("runs/evaluate");
  eval_cmd->add_option("--checkpoint", checkpoint, "Trained model (needed for the learnt heuristic)");
  eval_cmd->add_option("--heuristic", heuristics, "Sources: learnt, zero, random")->delimiter(',');
  eval_cmd->add_option("--trials", trials, "Number of trials");
  eval_cmd->add_option("--reps", reps, "Timing repetitions per instance (median is kept)");
  eval_cmd->add_flag("--retrain-per-trial,!--no-retrain-per-trial", retrain,
                     "Retrain the checkpoint's configuration once per trial (default) or reuse the checkpoint");

  auto* report_cmd = app.add_subcommand("report", "Re-emit tables and series from a stored report.json");
  std::string input;
  report_cmd->add_option("--input", input, "report.json written by evaluate")->required();
  report_cmd->add_option("--out", out_dir, "Output directory")->default_str("runs/report");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    RunConfig c;
    if (!config_path.empty()) {
      json j;
      try {
        const auto bytes = read_file(config_path);
        j = json::parse(bytes.begin(), bytes.end());
      } catch (const json::exception& e) {
        throw UsageError(config_path + ": " + e.what());
      }
      c = RunConfig::from_json(j);
    }
    if (seed) c.seed = *seed;
    if (threads) c.threads = *threads;
    if (data_dir) c.data_dir = *data_dir;
    if (c.data_dir.empty()) c.data_dir = env_data_dir();
    if (families) c.data.families = *families;
    if (sizes) c.data.sizes = *sizes;
    if (hidden) c.model.hidden_dim = *hidden;
    if (mlp_hidden) c.model.mlp_hidden = *mlp_hidden;
    if (mlp_layers) c.model.mlp_layers = *mlp_layers;
    if (lambda) c.model.lambda = *lambda;
    if (lr) c.model.learning_rate = *lr;
    if (weight_decay) c.model.weight_decay = *weight_decay;
    if (batch_size) c.train.batch_size = *batch_size;
    if (epochs) c.train.max_epochs = *epochs;
    if (patience) c.train.patience = *patience;
    if (hinge) c.train.hinge_penalty = true;
    if (level) c.sweep.level = *level;
    if (budget) c.sweep.budget = *budget;
    if (sweep_epochs) c.sweep.max_epochs = *sweep_epochs;
    if (sweep_patience) c.sweep.patience = *sweep_patience;
    if (checkpoint) c.evaluate.checkpoint = *checkpoint;
    if (heuristics) c.evaluate.heuristics = *heuristics;
    if (trials) c.evaluate.trials = *trials;
    if (reps) c.evaluate.timing_repetitions = *reps;
    if (retrain) c.evaluate.retrain_per_trial = *retrain;

    if (*generate) return run_generate(c, out);
    if (*train_cmd) return run_train(c, out_dir.empty() ? "runs/train" : out_dir, out, err);
    if (*sweep_cmd) return run_sweep(c, out_dir.empty() ? "runs/sweep" : out_dir, out, err);
    if (*eval_cmd) return run_evaluate(c, out_dir.empty() ? "runs/evaluate" : out_dir, out, err);
    if (*report_cmd) return run_report(input, out_dir.empty() ? "runs/report" : out_dir, out);
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DivergenceDetected& e) {
    err << "training diverged: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const ChecksumMismatch& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const FormatError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace narstar
