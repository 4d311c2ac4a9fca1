#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace narstar::ad {

/// Dense row-major matrix of doubles. Scalars are 1x1; vectors are n x 1 or 1 x n.
struct Tensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
  Tensor(std::size_t r, std::size_t c, std::vector<double> values);

  static Tensor scalar(double x) { return Tensor(1, 1, x); }

  std::size_t size() const noexcept { return data.size(); }
  bool empty() const noexcept { return data.empty(); }
  std::vector<std::size_t> shape() const { return {rows, cols}; }
  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  double item() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

std::string shape_string(const Tensor& t);

class ShapeMismatch : public std::invalid_argument {
 public:
  ShapeMismatch(const std::string& op, const Tensor& a, const Tensor& b);
  ShapeMismatch(const std::string& op, const std::string& detail);
};

class NotScalar : public std::invalid_argument {
 public:
  explicit NotScalar(const Tensor& t);
};

/// Named trainable tensor with its gradient and Adam moments.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor first_moment;
  Tensor second_moment;
};

class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore& other);
  ParameterStore& operator=(const ParameterStore& other);
  ParameterStore(ParameterStore&&) noexcept = default;
  ParameterStore& operator=(ParameterStore&&) noexcept = default;

  /// Adds a zero-initialised parameter. Throws std::invalid_argument on a
  /// duplicate name.
  Parameter& add(const std::string& name, std::size_t rows, std::size_t cols);
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  bool contains(const std::string& name) const;

  /// Parameters in insertion order; addresses are stable.
  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  std::size_t size() const noexcept { return params_.size(); }
  std::size_t scalar_count() const;

  void zero_grad();
  std::uint64_t step_count() const noexcept { return steps_; }

 private:
  friend void adam_step(ParameterStore&, const struct AdamOptions&);
  std::vector<std::unique_ptr<Parameter>> params_;
  std::uint64_t steps_ = 0;
};

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled
};

/// One Adam step with decoupled weight decay:
///   p <- p (1 - lr wd) - lr m_hat / (sqrt(v_hat) + eps)
/// followed by zeroing every gradient.
void adam_step(ParameterStore& store, const AdamOptions& options);

/// Shared row-index vector (gather indices, segment ids).
using Index = std::shared_ptr<const std::vector<std::uint32_t>>;
Index make_index(std::vector<std::uint32_t> values);

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  const Tensor& value() const;
  /// Gradient accumulated by the last backward (empty if none reached it).
  const Tensor& grad() const;
  std::size_t rows() const { return value().rows; }
  std::size_t cols() const { return value().cols; }
  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Append-only record of a computation. Nodes are created in topological
/// order, so backward is a reverse sweep.
///
/// Gradients of leaves created with `leaf(..., true)` accumulate across
/// repeated backward calls; parameter leaves add into Parameter::grad on every
/// backward. Intermediate gradients are reset at the start of each backward.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Var constant(Tensor value);
  Var leaf(Tensor value, bool requires_grad = true);
  /// Snapshot of a parameter's current value, wired to its gradient.
  Var parameter(Parameter& p);

  void backward(Var loss);

  std::size_t size() const noexcept { return nodes_.size(); }

  // Op construction API, used by the free functions below.
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  /// Gradient buffer of `id`, allocated (zeroed) on first use.
  Tensor& grad_buffer(std::size_t id);
  const Tensor& grad(std::size_t id) const { return nodes_[id].grad; }
  Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);
  Var handle(std::size_t id) { return Var(this, id); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
    bool is_leaf = false;
  };
  std::vector<Node> nodes_;
};

// Forward ops. All throw ShapeMismatch on incompatible shapes and require
// their inputs to live on the same tape.

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Elementwise product of equal shapes.
Var mul(Var a, Var b);
Var scale(Var a, double factor);
/// (n x k) + (1 x k), broadcast over rows.
Var add_bias(Var a, Var bias);
Var relu(Var a);
/// Concatenation along the last axis; all inputs share the row count.
Var concat(const std::vector<Var>& parts);
/// out[i] = a[index[i]] (rows).
Var gather_rows(Var a, Index index);
/// Row i of `values` belongs to segment segments[i]; out[s] is the elementwise
/// max over the segment. Backward routes each column's gradient to the first
/// argmax row. Empty segments yield zero rows and no gradient.
Var segment_max(Var values, Index segments, std::size_t segment_count);
/// Mean over segments of -log softmax(logits within segment)[target]. `logits`
/// is m x 1; targets[s] is the row of the true element of segment s. Segments
/// with no rows are an error.
Var softmax_cross_entropy(Var logits, Index segments, std::size_t segment_count, Index targets);
Var l2_norm_squared(Var a);
Var sum(Var a);
/// Single element as a 1x1 tensor.
Var element(Var a, std::size_t row, std::size_t col);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(double k, Var a) { return scale(a, k); }

}  // namespace narstar::ad
