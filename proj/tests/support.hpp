#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "narstar/autodiff.hpp"
#include "narstar/graph.hpp"
#include "narstar/model.hpp"
#include "narstar/rng.hpp"
#include "narstar/search.hpp"
#include "narstar/training.hpp"

namespace narstar::testing {

inline DensityFamily family_at(std::size_t i) {
  constexpr DensityFamily all[] = {DensityFamily::sparse, DensityFamily::dense, DensityFamily::very_dense};
  return all[i % 3];
}

/// Random instance from one of the three families, regenerating until a
/// reachable pair exists.
inline ProblemInstance random_instance(std::uint64_t seed, std::size_t n, DensityFamily family) {
  for (std::uint64_t attempt = 0;; ++attempt) {
    DistributionConfig config;
    config.node_count = n;
    config.edge_rule = family_rule(family);
    config.seed = derive_seed(seed, attempt);
    try {
      return sample_instance(generate_graph(config), derive_seed(config.seed, "pair"));
    } catch (const NoReachablePair&) {
    }
  }
}

/// Plain Bellman-Ford over the undirected edge list.
inline std::vector<double> bellman_ford(const Graph& graph, NodeId source) {
  std::vector<double> d(graph.node_count(), std::numeric_limits<double>::infinity());
  d[source] = 0.0;
  for (std::size_t round = 0; round + 1 < graph.node_count(); ++round) {
    bool changed = false;
    for (const Edge& e : graph.edges()) {
      if (d[e.u] + e.weight < d[e.v]) d[e.v] = d[e.u] + e.weight, changed = true;
      if (d[e.v] + e.weight < d[e.u]) d[e.u] = d[e.v] + e.weight, changed = true;
    }
    if (!changed) break;
  }
  return d;
}

/// |a - b| / max(|a|, |b|, floor). The floor sits at the round-off level of a
/// central difference with step 1e-5 on an O(1) loss.
inline double relative_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline constexpr double kFiniteDifferenceStep = 1e-5;

/// Running central-difference comparison. An entry whose forward and backward
/// one-sided differences disagree by more than `kink_tolerance` straddles a
/// non-differentiable point within one step; it is counted and not scored.
struct GradientCheck {
  double worst = 0.0;
  std::size_t checked = 0;
  std::size_t kinks = 0;
  static constexpr double kink_tolerance = 1e-3;

  void add(double analytic, double centre, double up, double down) {
    const double h = kFiniteDifferenceStep;
    if (relative_error((up - centre) / h, (centre - down) / h) > kink_tolerance) {
      ++kinks;
      return;
    }
    ++checked;
    worst = std::max(worst, relative_error(analytic, (up - down) / (2.0 * h)));
  }
  void merge(const GradientCheck& o) {
    worst = std::max(worst, o.worst);
    checked += o.checked;
    kinks += o.kinks;
  }
};

/// Central-difference check of d f / d inputs. `f` builds a scalar on the tape
/// from leaves holding `inputs`.
inline GradientCheck op_gradient_error(const std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)>& f,
                                       std::vector<ad::Tensor> inputs) {
  ad::Tape tape;
  std::vector<ad::Var> leaves;
  for (const auto& t : inputs) leaves.push_back(tape.leaf(t));
  const ad::Var out = f(tape, leaves);
  tape.backward(out);
  std::vector<ad::Tensor> analytic;
  for (const auto& v : leaves) {
    analytic.push_back(v.grad().empty() ? ad::Tensor(v.rows(), v.cols()) : v.grad());
  }

  auto evaluate = [&] {
    ad::Tape t;
    std::vector<ad::Var> vs;
    for (const auto& x : inputs) vs.push_back(t.constant(x));
    return f(t, vs).value().item();
  };
  const double centre = evaluate();
  GradientCheck check;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double x = inputs[k].data[i];
      inputs[k].data[i] = x + kFiniteDifferenceStep;
      const double up = evaluate();
      inputs[k].data[i] = x - kFiniteDifferenceStep;
      const double down = evaluate();
      inputs[k].data[i] = x;
      check.add(analytic[k].data[i], centre, up, down);
    }
  }
  return check;
}

inline ad::Tensor random_tensor(Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
  ad::Tensor t(rows, cols);
  for (auto& x : t.data) x = rng.uniform(-scale, scale);
  return t;
}

/// Finite-difference checks over every tape op, on random shapes and values
/// drawn from `seed`.
inline GradientCheck op_suite_error(std::uint64_t seed) {
  using namespace ad;
  Rng rng(seed);
  const auto n = 2 + rng.below(4);
  const auto k = 1 + rng.below(4);
  const Tensor probe = random_tensor(rng, n, k);
  auto dot = [&](Var x) { return sum(mul(x, x.tape().constant(probe))); };
  auto square = [](Var x) { return sum(mul(x, x)); };
  std::vector<std::uint32_t> segs(n);
  for (std::size_t i = 0; i < n; ++i) segs[i] = static_cast<std::uint32_t>(i % 2);
  const auto seg_index = make_index(segs);
  using Fn = std::function<Var(Tape&, const std::vector<Var>&)>;

  GradientCheck total;
  auto check = [&](const Fn& f, std::vector<Tensor> inputs) { total.merge(op_gradient_error(f, std::move(inputs))); };
  check([&](Tape&, const std::vector<Var>& v) { return dot(matmul(v[0], v[1])); },
        {random_tensor(rng, n, 3), random_tensor(rng, 3, k)});
  check([&](Tape&, const std::vector<Var>& v) { return dot(v[0] + v[1]); },
        {random_tensor(rng, n, k), random_tensor(rng, n, k)});
  check([&](Tape&, const std::vector<Var>& v) { return dot(v[0] - v[1]); },
        {random_tensor(rng, n, k), random_tensor(rng, n, k)});
  check([&](Tape&, const std::vector<Var>& v) { return dot(mul(v[0], v[1])); },
        {random_tensor(rng, n, k), random_tensor(rng, n, k)});
  check([&](Tape&, const std::vector<Var>& v) { return dot(scale(v[0], -1.7)); }, {random_tensor(rng, n, k)});
  check([&](Tape&, const std::vector<Var>& v) { return dot(add_bias(v[0], v[1])); },
        {random_tensor(rng, n, k), random_tensor(rng, 1, k)});
  check([&](Tape&, const std::vector<Var>& v) { return dot(relu(v[0])); }, {random_tensor(rng, n, k)});
  check([&](Tape&, const std::vector<Var>& v) { return square(concat({v[0], v[1]})); },
        {random_tensor(rng, n, 2), random_tensor(rng, n, 1)});
  check([&](Tape&, const std::vector<Var>& v) { return square(gather_rows(v[0], make_index({1, 0, 1, 1}))); },
        {random_tensor(rng, 2, k)});
  check([&](Tape&, const std::vector<Var>& v) { return square(segment_max(v[0], seg_index, 2)); },
        {random_tensor(rng, n, k)});
  check([&](Tape&, const std::vector<Var>& v) { return softmax_cross_entropy(v[0], seg_index, 2, make_index({0, 1})); },
        {random_tensor(rng, n, 1, 3.0)});
  check([&](Tape&, const std::vector<Var>& v) { return l2_norm_squared(v[0]); }, {random_tensor(rng, n, k)});
  check([&](Tape&, const std::vector<Var>& v) { return square(element(v[0], n - 1, k - 1)); },
        {random_tensor(rng, n, k)});
  check(
      [&](Tape&, const std::vector<Var>& v) {
        const Var h = relu(add_bias(matmul(v[0], v[1]), v[2]));
        return sum(add_bias(matmul(h, v[3]), v[4]));
      },
      {random_tensor(rng, n, 3), random_tensor(rng, 3, 4), random_tensor(rng, 1, 4), random_tensor(rng, 4, k),
       random_tensor(rng, 1, k)});
  return total;
}

/// Model with every parameter (biases included) drawn from U[-scale, scale].
inline NarModel random_model(const ModelConfig& config, std::uint64_t seed, double scale = 0.5) {
  NarModel model(config);
  Rng rng(seed);
  for (auto* p : model.parameters().all()) {
    for (auto& x : p->value.data) x = rng.uniform(-scale, scale);
  }
  return model;
}

inline double joint_loss_value(const NarModel& model, const TrainingSample& sample, const LossOptions& options) {
  ad::Tape tape;
  auto bound = BoundModel::frozen(model, tape);
  const auto outputs = bound.rollout(sample.instance, sample.graph, sample.trace.length());
  return joint_loss(outputs, sample.trace, sample.instance, sample.graph, options).total.value().item();
}

/// Central-difference check of the joint loss with respect to every model
/// parameter.
inline GradientCheck model_gradient_error(NarModel model, const TrainingSample& sample, const LossOptions& options) {
  model.parameters().zero_grad();
  {
    ad::Tape tape;
    auto bound = BoundModel::trainable(model, tape);
    const auto outputs = bound.rollout(sample.instance, sample.graph, sample.trace.length());
    tape.backward(joint_loss(outputs, sample.trace, sample.instance, sample.graph, options).total);
  }
  const double centre = joint_loss_value(model, sample, options);
  GradientCheck check;
  for (auto* p : model.parameters().all()) {
    const ad::Tensor analytic = p->grad;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double x = p->value.data[i];
      p->value.data[i] = x + kFiniteDifferenceStep;
      const double up = joint_loss_value(model, sample, options);
      p->value.data[i] = x - kFiniteDifferenceStep;
      const double down = joint_loss_value(model, sample, options);
      p->value.data[i] = x;
      check.add(analytic.data[i], centre, up, down);
    }
  }
  return check;
}

}  // namespace narstar::testing
