#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "narstar/autodiff.hpp"
#include "narstar/graph.hpp"
#include "narstar/search.hpp"

namespace narstar {

struct ModelConfig {
  std::size_t hidden_dim = 16;  // width of h_v, z_v, z_e
  std::size_t mlp_hidden = 16;  // inner width of the message and update MLPs
  std::size_t mlp_layers = 2;   // linear layers per MLP (>= 2)
  double lambda = 0.03;         // weight of the squared-norm term
  double learning_rate = 2e-3;
  double weight_decay = 1e-3;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument unless widths and lambda are positive and
  /// the optimiser rates are non-negative; all must be finite.
  void validate() const;
  nlohmann::json to_json() const;
  /// Rejects unknown keys; missing keys keep their defaults.
  static ModelConfig from_json(const nlohmann::json& j);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Message-passing view of a graph: every directed arc plus one self-arc per
/// node, ordered by (destination, source). Arc i carries a message src -> dst.
struct MessageGraph {
  std::size_t node_count = 0;
  ad::Index src;
  ad::Index dst;
  std::vector<double> weights;  // self-arcs carry 0
  std::vector<std::size_t> offsets;  // arcs of destination v: [offsets[v], offsets[v+1])

  static MessageGraph build(const Graph& graph);
  std::size_t arc_count() const noexcept { return weights.size(); }
  /// Row of the arc u -> v. Throws std::out_of_range if absent.
  std::uint32_t arc_index(NodeId u, NodeId v) const;
};

/// Decoded outputs of one processor step.
struct StepOutputs {
  ad::Var pointer_logits;  // (arcs x 1): logit that arc.src precedes arc.dst
  ad::Var heuristic;       // (nodes x 1): y_v
  ad::Var latent;          // (nodes x hidden): H^(t)
};

struct Encoded {
  ad::Var nodes;  // Z_V (n x hidden)
  ad::Var arcs;   // Z_E (arcs x hidden), self-arcs included
};

class NarModel;

/// A model's parameters placed on one tape, with the step functions.
class BoundModel {
 public:
  /// Parameters wired to their gradients.
  static BoundModel trainable(NarModel& model, ad::Tape& tape);
  /// Parameters recorded as constants.
  static BoundModel frozen(const NarModel& model, ad::Tape& tape);

  Encoded encode(const ProblemInstance& instance, const MessageGraph& mg);
  ad::Var process_step(const MessageGraph& mg, const Encoded& z, ad::Var h_prev);
  StepOutputs decode_step(const MessageGraph& mg, const Encoded& z, ad::Var h_next, ad::Var h_prev);
  /// H^(0) = 0, then `steps` rounds of process/decode. Latents alone carry
  /// state between steps.
  std::vector<StepOutputs> rollout(const ProblemInstance& instance, const MessageGraph& mg,
                                   std::size_t steps);

  ad::Tape& tape() { return tape_; }
  /// Rows pushed through each message-MLP layer since construction, summed
  /// over layers.
  std::size_t message_rows() const noexcept { return message_rows_; }

 private:
  using ParamFn = std::function<ad::Var(const std::string&)>;
  BoundModel(const ModelConfig& config, ad::Tape& tape, const ParamFn& param);
  ad::Var mlp(const std::vector<ad::Var>& weights, const std::vector<ad::Var>& biases, ad::Var pre0);

  ad::Tape& tape_;
  std::size_t hidden_ = 0;
  ad::Var enc_node_, enc_edge_;
  ad::Var msg_dst_, msg_src_, msg_edge_, msg_bias0_;
  std::vector<ad::Var> msg_weights_, msg_biases_;  // layers after the first
  ad::Var upd_w0_, upd_b0_;
  std::vector<ad::Var> upd_weights_, upd_biases_;
  ad::Var ptr_dst_, ptr_src_, heur_;
  std::size_t message_rows_ = 0;
};

class NarModel {
 public:
  /// Fresh model with Glorot-uniform weights (zero biases) drawn from config.seed.
  explicit NarModel(ModelConfig config);
  /// Model from stored parameters; throws std::invalid_argument if names or
  /// shapes do not match the configuration.
  NarModel(ModelConfig config, ad::ParameterStore parameters);

  const ModelConfig& config() const noexcept { return config_; }
  ad::ParameterStore& parameters() noexcept { return params_; }
  const ad::ParameterStore& parameters() const noexcept { return params_; }

  /// 1-step inference y^(1) through the reference tape path.
  HeuristicField infer_heuristic(const ProblemInstance& instance) const;

  void save(const std::filesystem::path& path, const nlohmann::json& extra = {}) const;
  static NarModel load(const std::filesystem::path& path);

  /// Parameter names and shapes implied by a configuration.
  static std::vector<std::tuple<std::string, std::size_t, std::size_t>> layout(const ModelConfig& c);

 private:
  ModelConfig config_;
  ad::ParameterStore params_;
};

/// Features used by the encoder: x_v = [is_source, is_target].
constexpr std::size_t kNodeFeatures = 2;
constexpr std::size_t kEdgeFeatures = 1;

}  // namespace narstar
