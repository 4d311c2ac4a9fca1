#include "narstar/model.hpp"

#include <algorithm>
#include <cmath>

#include "narstar/checkpoint.hpp"
#include "narstar/rng.hpp"

namespace narstar {

using ad::Var;

void ModelConfig::validate() const {
  if (hidden_dim == 0 || mlp_hidden == 0) throw std::invalid_argument("model widths must be positive");
  if (mlp_layers < 2) throw std::invalid_argument("mlp_layers must be at least 2");
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("lambda must be positive and finite");
  for (double x : {learning_rate, weight_decay}) {
    if (!(x >= 0.0) || !std::isfinite(x)) {
      throw std::invalid_argument("learning_rate and weight_decay must be non-negative and finite");
    }
  }
}

nlohmann::json ModelConfig::to_json() const {
  return {{"hidden_dim", hidden_dim}, {"mlp_hidden", mlp_hidden},
          {"mlp_layers", mlp_layers}, {"lambda", lambda},
          {"learning_rate", learning_rate}, {"weight_decay", weight_decay},
          {"seed", seed}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "hidden_dim") c.hidden_dim = value.get<std::size_t>();
    else if (key == "mlp_hidden") c.mlp_hidden = value.get<std::size_t>();
    else if (key == "mlp_layers") c.mlp_layers = value.get<std::size_t>();
    else if (key == "lambda") c.lambda = value.get<double>();
    else if (key == "learning_rate") c.learning_rate = value.get<double>();
    else if (key == "weight_decay") c.weight_decay = value.get<double>();
    else if (key == "seed") c.seed = value.get<std::uint64_t>();
    else throw std::invalid_argument("unknown model config key '" + key + "'");
  }
  return c;
}

MessageGraph MessageGraph::build(const Graph& graph) {
  MessageGraph mg;
  mg.node_count = graph.node_count();
  std::vector<std::uint32_t> src, dst;
  const auto total = graph.arc_count() + graph.node_count();
  src.reserve(total);
  dst.reserve(total);
  mg.weights.reserve(total);
  mg.offsets.reserve(mg.node_count + 1);
  mg.offsets.push_back(0);
  for (NodeId v = 0; v < mg.node_count; ++v) {
    bool self_done = false;
    auto push_self = [&] {
      src.push_back(v);
      dst.push_back(v);
      mg.weights.push_back(0.0);
      self_done = true;
    };
    // Incoming arcs u -> v mirror the outgoing list of v.
    for (const Arc& a : graph.neighbors(v)) {
      if (!self_done && a.dst > v) push_self();
      src.push_back(a.dst);
      dst.push_back(v);
      mg.weights.push_back(a.weight);
    }
    if (!self_done) push_self();
    mg.offsets.push_back(src.size());
  }
  mg.src = ad::make_index(std::move(src));
  mg.dst = ad::make_index(std::move(dst));
  return mg;
}

std::uint32_t MessageGraph::arc_index(NodeId u, NodeId v) const {
  const auto begin = src->begin() + static_cast<std::ptrdiff_t>(offsets.at(v));
  const auto end = src->begin() + static_cast<std::ptrdiff_t>(offsets.at(v + 1));
  const auto it = std::lower_bound(begin, end, u);
  if (it == end || *it != u) {
    throw std::out_of_range("no arc " + std::to_string(u) + " -> " + std::to_string(v));
  }
  return static_cast<std::uint32_t>(it - src->begin());
}

// ---------------------------------------------------------------------------

std::vector<std::tuple<std::string, std::size_t, std::size_t>> NarModel::layout(const ModelConfig& c) {
  const auto H = c.hidden_dim;
  const auto M = c.mlp_hidden;
  const auto L = c.mlp_layers;
  std::vector<std::tuple<std::string, std::size_t, std::size_t>> out{
      {"encoder.node", kNodeFeatures, H},
      {"encoder.edge", kEdgeFeatures, H},
      {"message.0.dst", 2 * H, M},
      {"message.0.src", 2 * H, M},
      {"message.0.edge", H, M},
      {"message.0.bias", 1, M},
  };
  for (std::size_t i = 1; i < L; ++i) {
    const auto width = i + 1 == L ? H : M;
    out.emplace_back("message." + std::to_string(i) + ".weight", M, width);
    out.emplace_back("message." + std::to_string(i) + ".bias", 1, width);
  }
  out.emplace_back("update.0.weight", 3 * H, M);
  out.emplace_back("update.0.bias", 1, M);
  for (std::size_t i = 1; i < L; ++i) {
    const auto width = i + 1 == L ? H : M;
    out.emplace_back("update." + std::to_string(i) + ".weight", M, width);
    out.emplace_back("update." + std::to_string(i) + ".bias", 1, width);
  }
  out.emplace_back("decoder.pointer.dst", 3 * H, 1);
  out.emplace_back("decoder.pointer.src", 3 * H, 1);
  out.emplace_back("decoder.heuristic", 3 * H, 1);
  return out;
}

NarModel::NarModel(ModelConfig config) : config_(config) {
  config_.validate();
  const Rng init_stream = Rng(config_.seed).split("init");
  const auto H = static_cast<double>(config_.hidden_dim);
  for (const auto& [name, rows, cols] : layout(config_)) {
    auto& p = params_.add(name, rows, cols);
    if (name.ends_with(".bias")) continue;
    // The first message layer acts on the full [z_v, h_v, z_u, h_u, z_e] row.
    const double fan_in = name.starts_with("message.0.") ? 5.0 * H : static_cast<double>(rows);
    const double bound = std::sqrt(6.0 / (fan_in + static_cast<double>(cols)));
    Rng rng = init_stream.split(name);
    for (auto& x : p.value.data) x = rng.uniform(-bound, bound);
  }
}

NarModel::NarModel(ModelConfig config, ad::ParameterStore parameters)
    : config_(config), params_(std::move(parameters)) {
  config_.validate();
  const auto expected = layout(config_);
  if (expected.size() != params_.size()) {
    throw std::invalid_argument("parameter count does not match model configuration");
  }
  for (const auto& [name, rows, cols] : expected) {
    if (!params_.contains(name)) throw std::invalid_argument("missing parameter '" + name + "'");
    const auto& v = params_.at(name).value;
    if (v.rows != rows || v.cols != cols) {
      throw std::invalid_argument("parameter '" + name + "' has shape " + ad::shape_string(v));
    }
    if (!std::all_of(v.data.begin(), v.data.end(), [](double x) { return std::isfinite(x); })) {
      throw std::invalid_argument("parameter '" + name + "' has non-finite entries");
    }
  }
}

HeuristicField NarModel::infer_heuristic(const ProblemInstance& instance) const {
  ad::Tape tape;
  auto bound = BoundModel::frozen(*this, tape);
  const auto mg = MessageGraph::build(instance.graph);
  const auto steps = bound.rollout(instance, mg, 1);
  return {steps.front().heuristic.value().data};
}

void NarModel::save(const std::filesystem::path& path, const nlohmann::json& extra) const {
  nlohmann::json meta = {{"model_config", config_.to_json()}};
  if (!extra.is_null()) meta["extra"] = extra;
  save_checkpoint(path, params_, meta);
}

NarModel NarModel::load(const std::filesystem::path& path) {
  auto ckpt = load_checkpoint(path);
  if (!ckpt.metadata.contains("model_config")) {
    throw std::invalid_argument(path.string() + ": checkpoint lacks model_config");
  }
  return NarModel(ModelConfig::from_json(ckpt.metadata.at("model_config")), std::move(ckpt.parameters));
}

// ---------------------------------------------------------------------------

BoundModel BoundModel::trainable(NarModel& model, ad::Tape& tape) {
  auto& store = model.parameters();
  return BoundModel(model.config(), tape, [&](const std::string& name) { return tape.parameter(store.at(name)); });
}

BoundModel BoundModel::frozen(const NarModel& model, ad::Tape& tape) {
  const auto& store = model.parameters();
  return BoundModel(model.config(), tape,
                    [&](const std::string& name) { return tape.constant(store.at(name).value); });
}

BoundModel::BoundModel(const ModelConfig& config, ad::Tape& tape, const ParamFn& param)
    : tape_(tape), hidden_(config.hidden_dim) {
  enc_node_ = param("encoder.node");
  enc_edge_ = param("encoder.edge");
  msg_dst_ = param("message.0.dst");
  msg_src_ = param("message.0.src");
  msg_edge_ = param("message.0.edge");
  msg_bias0_ = param("message.0.bias");
  upd_w0_ = param("update.0.weight");
  upd_b0_ = param("update.0.bias");
  for (std::size_t i = 1; i < config.mlp_layers; ++i) {
    const auto k = std::to_string(i);
    msg_weights_.push_back(param("message." + k + ".weight"));
    msg_biases_.push_back(param("message." + k + ".bias"));
    upd_weights_.push_back(param("update." + k + ".weight"));
    upd_biases_.push_back(param("update." + k + ".bias"));
  }
  ptr_dst_ = param("decoder.pointer.dst");
  ptr_src_ = param("decoder.pointer.src");
  heur_ = param("decoder.heuristic");
}

Encoded BoundModel::encode(const ProblemInstance& instance, const MessageGraph& mg) {
  const auto n = instance.graph.node_count();
  ad::Tensor x(n, kNodeFeatures);
  x(instance.source, 0) = 1.0;
  x(instance.target, 1) = 1.0;
  ad::Tensor e(mg.arc_count(), kEdgeFeatures, mg.weights);
  return {ad::matmul(tape_.constant(std::move(x)), enc_node_),
          ad::matmul(tape_.constant(std::move(e)), enc_edge_)};
}

Var BoundModel::mlp(const std::vector<Var>& weights, const std::vector<Var>& biases, Var pre0) {
  Var h = pre0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    h = ad::add_bias(ad::matmul(ad::relu(h), weights[i]), biases[i]);
  }
  return h;
}

Var BoundModel::process_step(const MessageGraph& mg, const Encoded& z, Var h_prev) {
  if (h_prev.rows() != mg.node_count || h_prev.cols() != hidden_) {
    throw ad::ShapeMismatch("process_step", z.nodes.value(), h_prev.value());
  }
  const Var zh = ad::concat({z.nodes, h_prev});
  // First message layer on [z_v, h_v, z_u, h_u, z_e], split by block so the
  // node blocks are projected once per node rather than once per arc.
  const Var to_dst = ad::gather_rows(ad::matmul(zh, msg_dst_), mg.dst);
  const Var from_src = ad::gather_rows(ad::matmul(zh, msg_src_), mg.src);
  const Var pre = ad::add_bias(to_dst + from_src + ad::matmul(z.arcs, msg_edge_), msg_bias0_);
  const Var messages = mlp(msg_weights_, msg_biases_, pre);
  message_rows_ += mg.arc_count() * (1 + msg_weights_.size());

  const Var aggregate = ad::segment_max(messages, mg.dst, mg.node_count);
  const Var upd_pre = ad::add_bias(ad::matmul(ad::concat({z.nodes, h_prev, aggregate}), upd_w0_), upd_b0_);
  return mlp(upd_weights_, upd_biases_, upd_pre);
}

StepOutputs BoundModel::decode_step(const MessageGraph& mg, const Encoded& z, Var h_next, Var h_prev) {
  const Var features = ad::concat({z.nodes, h_next, h_prev});
  const Var heuristic = ad::matmul(features, heur_);
  const Var logits = ad::gather_rows(ad::matmul(features, ptr_dst_), mg.dst) +
                     ad::gather_rows(ad::matmul(features, ptr_src_), mg.src);
  return {logits, heuristic, h_next};
}

std::vector<StepOutputs> BoundModel::rollout(const ProblemInstance& instance, const MessageGraph& mg,
                                             std::size_t steps) {
  if (steps == 0) throw std::invalid_argument("rollout needs at least one step");
  const auto z = encode(instance, mg);
  Var h = tape_.constant(ad::Tensor(mg.node_count, hidden_));
  std::vector<StepOutputs> out;
  out.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    const Var next = process_step(mg, z, h);
    out.push_back(decode_step(mg, z, next, h));
    h = next;
  }
  return out;
}

}  // namespace narstar
