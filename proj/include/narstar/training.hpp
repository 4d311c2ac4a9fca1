#pragma once

#include <functional>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "narstar/model.hpp"
#include "narstar/search.hpp"

namespace narstar {

struct LossOptions {
  double lambda = 0.03;
  /// Penalise (y_v - y_u - w_uv) instead of (y_v - y_u) on violated arcs.
  bool hinge_penalty = false;
};

/// Per-term means over the T steps of one rollout.
struct LossBreakdown {
  double ce_term = 0.0;
  double objective_term = 0.0;  // mean of y_s - y_t
  double violation_term = 0.0;
  double norm_term = 0.0;       // mean of lambda * ||y||^2
  double total = 0.0;

  LossBreakdown& operator+=(const LossBreakdown& o);
  LossBreakdown scaled(double k) const;
  nlohmann::json to_json() const;
};

struct JointLoss {
  ad::Var total;  // differentiable scalar
  LossBreakdown breakdown;
};

class LengthMismatch : public std::invalid_argument {
 public:
  LengthMismatch(std::size_t rollout, std::size_t trace);
};

/// Cross-entropy of pointer logits against the trace's predecessor arrays plus
/// the penalised potential objective
///   (y_s - y_t) + sum_{(u,v)} (y_v - y_u) 1[y_v - y_u > w_uv] + lambda ||y||^2,
/// each averaged over steps. The violation gate is a constant (no gradient)
/// and uses the same tolerance as check_constraints.
JointLoss joint_loss(const std::vector<StepOutputs>& outputs, const DijkstraTrace& trace,
                     const ProblemInstance& instance, const MessageGraph& mg, const LossOptions& options);

/// Instance with its trace and message graph, prepared once before training.
struct TrainingSample {
  ProblemInstance instance;
  DijkstraTrace trace;
  MessageGraph graph;
  double optimal_cost = 0.0;
};

std::vector<TrainingSample> prepare_samples(const std::vector<ProblemInstance>& instances);

struct TrainOptions {
  std::size_t batch_size = 32;
  std::size_t max_epochs = 100;
  std::size_t patience = 10;
  bool hinge_penalty = false;
  /// Called after every epoch (e.g. to stream line-delimited records).
  std::function<void(const nlohmann::json&)> on_epoch;
};

struct ValidationMetrics {
  double loss = 0.0;
  double constraint_fraction = 0.0;  // of the 1-step field
  double pointer_accuracy = 0.0;     // argmax vs trace, over all steps and nodes
  double gap_proxy = 0.0;            // mean of max(0, d* - (y_t - y_s)) / d*
  double score = 0.0;                // constraint_fraction - gap_proxy
  nlohmann::json to_json() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  LossBreakdown train;
  ValidationMetrics validation;
  nlohmann::json to_json() const;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  // 0 means the initial parameters
  double best_score = 0.0;
  ValidationMetrics initial;
  nlohmann::json to_json() const;
};

class DivergenceDetected : public std::runtime_error {
 public:
  DivergenceDetected(std::size_t epoch, TrainReport report);
  const TrainReport& report() const noexcept { return report_; }

 private:
  TrainReport report_;
};

struct TrainResult {
  NarModel model;
  TrainReport report;
};

/// Validation metrics of a model on prepared samples.
ValidationMetrics validate(const NarModel& model, const std::vector<TrainingSample>& samples,
                           const LossOptions& loss);

/// Minibatch Adam on the joint loss with early stopping on the validation
/// score; returns the best-scoring parameters. Deterministic in config.seed.
/// Throws DivergenceDetected if a training loss becomes non-finite.
TrainResult train(const ModelConfig& config, const std::vector<TrainingSample>& train_set,
                  const std::vector<TrainingSample>& validation_set, const TrainOptions& options);

// ---------------------------------------------------------------------------
// Random search over hyperparameters.

struct Range {
  double low = 0.0;
  double high = 0.0;
  bool contains(double x) const { return x >= low && x <= high; }
};

struct SearchSpace {
  Range hidden;  // integer, uniform
  Range learning_rate;  // log-uniform
  Range weight_decay;   // log-uniform
  Range lambda;         // log-uniform

  /// Level 1 is the wide search, level 2 the refined one.
  static SearchSpace level(int level);
  bool contains(const ModelConfig& c) const;
};

/// Draws hidden_dim (= mlp_hidden) uniformly and the rest log-uniformly.
ModelConfig sample_config(const SearchSpace& space, std::uint64_t seed);

struct SweepEntry {
  ModelConfig config;
  double score = 0.0;
  std::size_t best_epoch = 0;
  bool diverged = false;
  nlohmann::json to_json() const;
};

struct SweepOptions {
  int level = 1;
  std::size_t budget = 200;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  TrainOptions train;  // typically a reduced epoch budget
  std::function<void(const SweepEntry&)> on_trial;
};

/// Trains `budget` sampled configurations; sorted by score (descending), ties
/// by config seed (ascending). Diverged trials score -inf.
std::vector<SweepEntry> random_search(const std::vector<TrainingSample>& train_set,
                                      const std::vector<TrainingSample>& validation_set,
                                      const SweepOptions& options);

}  // namespace narstar
