#include "narstar/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <numeric>

#include "narstar/parallel.hpp"
#include "narstar/rng.hpp"

namespace narstar {

using ad::Var;

LossBreakdown& LossBreakdown::operator+=(const LossBreakdown& o) {
  ce_term += o.ce_term;
  objective_term += o.objective_term;
  violation_term += o.violation_term;
  norm_term += o.norm_term;
  total += o.total;
  return *this;
}

LossBreakdown LossBreakdown::scaled(double k) const {
  return {ce_term * k, objective_term * k, violation_term * k, norm_term * k, total * k};
}

nlohmann::json LossBreakdown::to_json() const {
  return {{"ce", ce_term}, {"objective", objective_term}, {"violation", violation_term},
          {"norm", norm_term}, {"total", total}};
}

LengthMismatch::LengthMismatch(std::size_t rollout, std::size_t trace)
    : std::invalid_argument("rollout has " + std::to_string(rollout) + " steps, trace has " +
                            std::to_string(trace)) {}

JointLoss joint_loss(const std::vector<StepOutputs>& outputs, const DijkstraTrace& trace,
                     const ProblemInstance& instance, const MessageGraph& mg, const LossOptions& options) {
  if (outputs.size() != trace.length() || outputs.empty()) {
    throw LengthMismatch(outputs.size(), trace.length());
  }
  auto& tape = outputs.front().heuristic.tape();
  const auto n = instance.graph.node_count();
  const auto arcs = instance.graph.arcs();

  std::vector<std::uint32_t> arc_src, arc_dst;
  std::vector<double> weights;
  arc_src.reserve(arcs.size());
  arc_dst.reserve(arcs.size());
  for (const Arc& a : arcs) {
    arc_src.push_back(a.src);
    arc_dst.push_back(a.dst);
    weights.push_back(a.weight);
  }
  const auto src_index = ad::make_index(std::move(arc_src));
  const auto dst_index = ad::make_index(std::move(arc_dst));

  LossBreakdown parts;
  Var ce_sum, heuristic_sum;
  for (std::size_t t = 0; t < outputs.size(); ++t) {
    const auto& out = outputs[t];
    const auto& pred = trace.steps[t].predecessors;
    std::vector<std::uint32_t> targets(n);
    for (NodeId v = 0; v < n; ++v) targets[v] = mg.arc_index(pred[v], v);
    const Var ce = ad::softmax_cross_entropy(out.pointer_logits, mg.dst, n, ad::make_index(std::move(targets)));

    const Var y = out.heuristic;
    const Var objective = ad::element(y, instance.source, 0) - ad::element(y, instance.target, 0);
    const Var norm = ad::scale(ad::l2_norm_squared(y), options.lambda);

    double violation_value = 0.0;
    Var step_heuristic = objective + norm;
    if (!arcs.empty()) {
      const Var diff = ad::gather_rows(y, dst_index) - ad::gather_rows(y, src_index);
      ad::Tensor gate(arcs.size(), 1);
      ad::Tensor offset(arcs.size(), 1);
      for (std::size_t i = 0; i < arcs.size(); ++i) {
        if (diff.value().data[i] > weights[i] + kConstraintTolerance) {
          gate.data[i] = 1.0;
          if (options.hinge_penalty) offset.data[i] = weights[i];
        }
      }
      Var penalised = diff;
      if (options.hinge_penalty) penalised = diff - tape.constant(std::move(offset));
      const Var violation = ad::sum(ad::mul(penalised, tape.constant(std::move(gate))));
      violation_value = violation.value().item();
      step_heuristic = step_heuristic + violation;
    }

    parts.ce_term += ce.value().item();
    parts.objective_term += objective.value().item();
    parts.violation_term += violation_value;
    parts.norm_term += norm.value().item();
    ce_sum = t == 0 ? ce : ce_sum + ce;
    heuristic_sum = t == 0 ? step_heuristic : heuristic_sum + step_heuristic;
  }
  const double inv_t = 1.0 / static_cast<double>(outputs.size());
  parts = parts.scaled(inv_t);
  parts.total = parts.ce_term + parts.objective_term + parts.violation_term + parts.norm_term;
  const Var total = ad::scale(ce_sum + heuristic_sum, inv_t);
  return {total, parts};
}

std::vector<TrainingSample> prepare_samples(const std::vector<ProblemInstance>& instances) {
  std::vector<TrainingSample> out;
  out.reserve(instances.size());
  for (const auto& inst : instances) {
    auto trace = dijkstra_trace(inst);
    const double optimal = trace.distances[inst.target];
    out.push_back({inst, std::move(trace), MessageGraph::build(inst.graph), optimal});
  }
  return out;
}

nlohmann::json ValidationMetrics::to_json() const {
  return {{"loss", loss}, {"constraint_fraction", constraint_fraction},
          {"pointer_accuracy", pointer_accuracy}, {"gap_proxy", gap_proxy}, {"score", score}};
}

nlohmann::json EpochRecord::to_json() const {
  return {{"record", "epoch"}, {"epoch", epoch}, {"train", train.to_json()},
          {"validation", validation.to_json()}};
}

nlohmann::json TrainReport::to_json() const {
  nlohmann::json epochs_json = nlohmann::json::array();
  for (const auto& e : epochs) epochs_json.push_back(e.to_json());
  return {{"record", "summary"}, {"epochs", epochs_json}, {"best_epoch", best_epoch},
          {"best_score", best_score}, {"initial", initial.to_json()}};
}

DivergenceDetected::DivergenceDetected(std::size_t epoch, TrainReport report)
    : std::runtime_error("training loss became non-finite in epoch " + std::to_string(epoch)),
      report_(std::move(report)) {}

ValidationMetrics validate(const NarModel& model, const std::vector<TrainingSample>& samples,
                           const LossOptions& loss_options) {
  ValidationMetrics m;
  if (samples.empty()) return m;
  std::size_t pointer_hits = 0, pointer_total = 0;
  for (const auto& s : samples) {
    ad::Tape tape;
    auto bound = BoundModel::frozen(model, tape);
    const auto outputs = bound.rollout(s.instance, s.graph, s.trace.length());
    m.loss += joint_loss(outputs, s.trace, s.instance, s.graph, loss_options).breakdown.total;

    const HeuristicField field{outputs.front().heuristic.value().data};
    m.constraint_fraction += check_constraints(s.instance.graph, field).satisfied_fraction;
    const double gap = field.values[s.instance.target] - field.values[s.instance.source];
    m.gap_proxy += std::max(0.0, s.optimal_cost - gap) / s.optimal_cost;

    for (std::size_t t = 0; t < outputs.size(); ++t) {
      const auto& logits = outputs[t].pointer_logits.value().data;
      const auto& pred = s.trace.steps[t].predecessors;
      for (NodeId v = 0; v < s.graph.node_count; ++v) {
        std::size_t best = s.graph.offsets[v];
        for (std::size_t a = best + 1; a < s.graph.offsets[v + 1]; ++a) {
          if (logits[a] > logits[best]) best = a;
        }
        pointer_hits += (*s.graph.src)[best] == pred[v];
        ++pointer_total;
      }
    }
  }
  const double n = static_cast<double>(samples.size());
  m.loss /= n;
  m.constraint_fraction /= n;
  m.gap_proxy /= n;
  m.pointer_accuracy = static_cast<double>(pointer_hits) / static_cast<double>(pointer_total);
  m.score = m.constraint_fraction - m.gap_proxy;
  return m;
}

TrainResult train(const ModelConfig& config, const std::vector<TrainingSample>& train_set,
                  const std::vector<TrainingSample>& validation_set, const TrainOptions& options) {
  if (train_set.empty() || validation_set.empty()) {
    throw std::invalid_argument("training and validation sets must be nonempty");
  }
  if (options.batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  NarModel model(config);
  const LossOptions loss_options{config.lambda, options.hinge_penalty};
  const ad::AdamOptions adam{config.learning_rate, 0.9, 0.999, 1e-8, config.weight_decay};

  TrainReport report;
  report.initial = validate(model, validation_set, loss_options);
  report.best_score = report.initial.score;
  ad::ParameterStore best = model.parameters();
  std::size_t since_best = 0;

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  const Rng shuffle_stream = Rng(config.seed).split("shuffle");

  for (std::size_t epoch = 1; epoch <= options.max_epochs; ++epoch) {
    Rng rng = shuffle_stream.split(epoch);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    LossBreakdown epoch_loss;
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const auto stop = std::min(order.size(), start + options.batch_size);
      const double inv_batch = 1.0 / static_cast<double>(stop - start);
      for (std::size_t k = start; k < stop; ++k) {
        const auto& s = train_set[order[k]];
        ad::Tape tape;
        auto bound = BoundModel::trainable(model, tape);
        const auto outputs = bound.rollout(s.instance, s.graph, s.trace.length());
        const auto loss = joint_loss(outputs, s.trace, s.instance, s.graph, loss_options);
        if (!std::isfinite(loss.breakdown.total)) {
          throw DivergenceDetected(epoch, std::move(report));
        }
        tape.backward(ad::scale(loss.total, inv_batch));
        epoch_loss += loss.breakdown;
      }
      ad::adam_step(model.parameters(), adam);
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train = epoch_loss.scaled(1.0 / static_cast<double>(train_set.size()));
    record.validation = validate(model, validation_set, loss_options);
    if (!std::isfinite(record.validation.loss)) {
      report.epochs.push_back(record);
      throw DivergenceDetected(epoch, std::move(report));
    }
    if (options.on_epoch) options.on_epoch(record.to_json());
    report.epochs.push_back(record);

    if (record.validation.score > report.best_score) {
      report.best_score = record.validation.score;
      report.best_epoch = epoch;
      best = model.parameters();
      since_best = 0;
    } else if (++since_best >= options.patience) {
      break;
    }
  }
  return {NarModel(config, std::move(best)), std::move(report)};
}

// ---------------------------------------------------------------------------

SearchSpace SearchSpace::level(int level) {
  switch (level) {
    case 1: return {{16, 512}, {1e-4, 1e-2}, {1e-5, 1e-1}, {1e-3, 1.0}};
    case 2: return {{80, 100}, {9e-4, 4e-3}, {9e-4, 4e-3}, {1e-2, 5e-2}};
  }
  throw std::invalid_argument("search level must be 1 or 2");
}

bool SearchSpace::contains(const ModelConfig& c) const {
  return hidden.contains(static_cast<double>(c.hidden_dim)) && learning_rate.contains(c.learning_rate) &&
         weight_decay.contains(c.weight_decay) && lambda.contains(c.lambda);
}

ModelConfig sample_config(const SearchSpace& space, std::uint64_t seed) {
  Rng rng(seed);
  auto log_uniform = [&](const Range& r) {
    return std::clamp(std::exp(rng.uniform(std::log(r.low), std::log(r.high))), r.low, r.high);
  };
  ModelConfig c;
  const auto lo = static_cast<std::uint64_t>(space.hidden.low);
  const auto hi = static_cast<std::uint64_t>(space.hidden.high);
  c.hidden_dim = static_cast<std::size_t>(lo + rng.below(hi - lo + 1));
  c.mlp_hidden = c.hidden_dim;
  c.learning_rate = log_uniform(space.learning_rate);
  c.weight_decay = log_uniform(space.weight_decay);
  c.lambda = log_uniform(space.lambda);
  c.seed = derive_seed(seed, "model");
  return c;
}

nlohmann::json SweepEntry::to_json() const {
  return {{"record", "trial"}, {"config", config.to_json()},
          {"score", std::isfinite(score) ? nlohmann::json(score) : nlohmann::json(nullptr)},
          {"best_epoch", best_epoch}, {"diverged", diverged}};
}

std::vector<SweepEntry> random_search(const std::vector<TrainingSample>& train_set,
                                      const std::vector<TrainingSample>& validation_set,
                                      const SweepOptions& options) {
  if (options.budget == 0) throw std::invalid_argument("sweep budget must be at least 1");
  const auto space = SearchSpace::level(options.level);
  const auto level_seed = derive_seed(options.seed, "sweep/level" + std::to_string(options.level));
  std::vector<SweepEntry> entries(options.budget);
  std::mutex report_mutex;
  parallel_for(options.budget, options.threads, [&](std::size_t i) {
    SweepEntry entry;
    entry.config = sample_config(space, derive_seed(level_seed, i));
    try {
      const auto result = train(entry.config, train_set, validation_set, options.train);
      entry.score = result.report.best_score;
      entry.best_epoch = result.report.best_epoch;
    } catch (const DivergenceDetected&) {
      entry.diverged = true;
      entry.score = -std::numeric_limits<double>::infinity();
    }
    if (options.on_trial) {
      std::lock_guard lock(report_mutex);
      options.on_trial(entry);
    }
    entries[i] = entry;
  });
  std::stable_sort(entries.begin(), entries.end(), [](const SweepEntry& a, const SweepEntry& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.config.seed < b.config.seed;
  });
  return entries;
}

}  // namespace narstar
