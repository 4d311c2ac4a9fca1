#include "narstar/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace narstar::ad {

Tensor::Tensor(std::size_t r, std::size_t c, std::vector<double> values)
    : rows(r), cols(c), data(std::move(values)) {
  if (data.size() != r * c) {
    throw ShapeMismatch("tensor", std::to_string(data.size()) + " values for shape (" +
                                      std::to_string(r) + ", " + std::to_string(c) + ")");
  }
}

double Tensor::item() const {
  if (rows != 1 || cols != 1) throw NotScalar(*this);
  return data[0];
}

std::string shape_string(const Tensor& t) {
  return "(" + std::to_string(t.rows) + ", " + std::to_string(t.cols) + ")";
}

ShapeMismatch::ShapeMismatch(const std::string& op, const Tensor& a, const Tensor& b)
    : std::invalid_argument(op + ": shape mismatch " + shape_string(a) + " vs " + shape_string(b)) {}

ShapeMismatch::ShapeMismatch(const std::string& op, const std::string& detail)
    : std::invalid_argument(op + ": " + detail) {}

NotScalar::NotScalar(const Tensor& t)
    : std::invalid_argument("expected a scalar, got shape " + shape_string(t)) {}

// ---------------------------------------------------------------------------
// ParameterStore

ParameterStore::ParameterStore(const ParameterStore& other) : steps_(other.steps_) {
  params_.reserve(other.params_.size());
  for (const auto& p : other.params_) params_.push_back(std::make_unique<Parameter>(*p));
}

ParameterStore& ParameterStore::operator=(const ParameterStore& other) {
  if (this != &other) {
    ParameterStore copy(other);
    *this = std::move(copy);
  }
  return *this;
}

Parameter& ParameterStore::add(const std::string& name, std::size_t rows, std::size_t cols) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->value = Tensor(rows, cols);
  p->grad = Tensor(rows, cols);
  p->first_moment = Tensor(rows, cols);
  p->second_moment = Tensor(rows, cols);
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter& ParameterStore::at(const std::string& name) {
  for (auto& p : params_) {
    if (p->name == name) return *p;
  }
  throw std::out_of_range("no parameter '" + name + "'");
}

const Parameter& ParameterStore::at(const std::string& name) const {
  return const_cast<ParameterStore*>(this)->at(name);
}

bool ParameterStore::contains(const std::string& name) const {
  return std::any_of(params_.begin(), params_.end(), [&](const auto& p) { return p->name == name; });
}

std::vector<Parameter*> ParameterStore::all() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> ParameterStore::all() const {
  std::vector<const Parameter*> out;
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) std::fill(p->grad.data.begin(), p->grad.data.end(), 0.0);
}

void adam_step(ParameterStore& store, const AdamOptions& o) {
  ++store.steps_;
  const double t = static_cast<double>(store.steps_);
  const double correction1 = 1.0 - std::pow(o.beta1, t);
  const double correction2 = 1.0 - std::pow(o.beta2, t);
  const double decay = 1.0 - o.learning_rate * o.weight_decay;
  for (auto& p : store.params_) {
    auto& value = p->value.data;
    auto& grad = p->grad.data;
    auto& m = p->first_moment.data;
    auto& v = p->second_moment.data;
    for (std::size_t i = 0; i < value.size(); ++i) {
      m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * grad[i];
      v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * grad[i] * grad[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      value[i] = value[i] * decay - o.learning_rate * m_hat / (std::sqrt(v_hat) + o.eps);
    }
    std::fill(grad.begin(), grad.end(), 0.0);
  }
}

Index make_index(std::vector<std::uint32_t> values) {
  return std::make_shared<const std::vector<std::uint32_t>>(std::move(values));
}

// ---------------------------------------------------------------------------
// Tape

const Tensor& Var::value() const { return tape_->value(id_); }
const Tensor& Var::grad() const { return tape_->grad(id_); }

Var Tape::constant(Tensor value) {
  nodes_.push_back({std::move(value), {}, nullptr, nullptr, false, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  nodes_.push_back({std::move(value), {}, nullptr, nullptr, requires_grad, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Parameter& p) {
  nodes_.push_back({p.value, {}, nullptr, &p, true, true});
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad_buffer(std::size_t id) {
  auto& node = nodes_[id];
  if (node.grad.empty()) node.grad = Tensor(node.value.rows, node.value.cols);
  return node.grad;
}

Var Tape::record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
  const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                 [&](std::size_t i) { return nodes_[i].requires_grad; });
  nodes_.push_back({std::move(value), {}, needs ? std::move(backward) : nullptr, nullptr, needs, false});
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(Var loss) {
  if (loss.tape_ != this) throw std::invalid_argument("loss is not on this tape");
  const auto& lv = nodes_[loss.id_].value;
  if (lv.rows != 1 || lv.cols != 1) throw NotScalar(lv);
  for (auto& node : nodes_) {
    if (!node.is_leaf) node.grad = Tensor();
  }
  if (!nodes_[loss.id_].requires_grad) return;
  grad_buffer(loss.id_).data[0] += 1.0;
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    auto& node = nodes_[i];
    if (node.backward && !node.grad.empty()) node.backward(*this, i);
  }
  for (auto& node : nodes_) {
    if (node.param && !node.grad.empty()) {
      auto& target = node.param->grad.data;
      for (std::size_t k = 0; k < target.size(); ++k) target[k] += node.grad.data[k];
      node.grad = Tensor();
    }
  }
}

// ---------------------------------------------------------------------------
// Ops

namespace {

void same_tape(const Var& a, const Var& b) {
  if (&a.tape() != &b.tape()) throw std::invalid_argument("operands live on different tapes");
}

void require_same_shape(const char* op, const Var& a, const Var& b) {
  same_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeMismatch(op, a.value(), b.value());
}

// C += A * B with A (n x k), B (k x m).
void gemm_nn(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    double* crow = c + i * m;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double x = arow[p];
      if (x == 0.0) continue;
      const double* brow = b + p * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += x * brow[j];
    }
  }
}

// C += A * B^T with A (n x m), B (k x m); C is n x k.
void gemm_nt(const double* a, const double* b, double* c, std::size_t n, std::size_t m, std::size_t k) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* arow = a + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b + p * m;
      double acc = 0.0;
      for (std::size_t j = 0; j < m; ++j) acc += arow[j] * brow[j];
      c[i * k + p] += acc;
    }
  }
}

// C += A^T * B with A (n x k), B (n x m); C is k x m.
void gemm_tn(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* arow = a + i * k;
    const double* brow = b + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double x = arow[p];
      if (x == 0.0) continue;
      double* crow = c + p * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += x * brow[j];
    }
  }
}

}  // namespace

Var matmul(Var a, Var b) {
  same_tape(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.cols != bv.rows) throw ShapeMismatch("matmul", av, bv);
  Tensor out(av.rows, bv.cols);
  gemm_nn(av.data.data(), bv.data.data(), out.data.data(), av.rows, av.cols, bv.cols);
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& A = t.value(ia);
    const auto& B = t.value(ib);
    if (t.requires_grad(ia)) {
      gemm_nt(g.data.data(), B.data.data(), t.grad_buffer(ia).data.data(), A.rows, B.cols, A.cols);
    }
    if (t.requires_grad(ib)) {
      gemm_tn(A.data.data(), g.data.data(), t.grad_buffer(ib).data.data(), A.rows, A.cols, B.cols);
    }
  });
}

Var add(Var a, Var b) {
  require_same_shape("add", a, b);
  Tensor out = a.value();
  const auto& bv = b.value().data;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += bv[i];
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const auto& g = t.grad(self).data;
    for (auto id : {ia, ib}) {
      if (!t.requires_grad(id)) continue;
      auto& d = t.grad_buffer(id).data;
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
    }
  });
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a, b);
  Tensor out = a.value();
  const auto& bv = b.value().data;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= bv[i];
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const auto& g = t.grad(self).data;
    if (t.requires_grad(ia)) {
      auto& d = t.grad_buffer(ia).data;
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
    }
    if (t.requires_grad(ib)) {
      auto& d = t.grad_buffer(ib).data;
      for (std::size_t i = 0; i < g.size(); ++i) d[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_shape("mul", a, b);
  Tensor out = a.value();
  const auto& bv = b.value().data;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= bv[i];
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const auto& g = t.grad(self).data;
    if (t.requires_grad(ia)) {
      const auto& other = t.value(ib).data;
      auto& d = t.grad_buffer(ia).data;
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * other[i];
    }
    if (t.requires_grad(ib)) {
      const auto& other = t.value(ia).data;
      auto& d = t.grad_buffer(ib).data;
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * other[i];
    }
  });
}

Var scale(Var a, double factor) {
  Tensor out = a.value();
  for (auto& x : out.data) x *= factor;
  const auto ia = a.id();
  return a.tape().record(std::move(out), {ia}, [ia, factor](Tape& t, std::size_t self) {
    const auto& g = t.grad(self).data;
    auto& d = t.grad_buffer(ia).data;
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += factor * g[i];
  });
}

Var add_bias(Var a, Var bias) {
  same_tape(a, bias);
  const auto& av = a.value();
  const auto& bv = bias.value();
  if (bv.rows != 1 || bv.cols != av.cols) throw ShapeMismatch("add_bias", av, bv);
  Tensor out = av;
  for (std::size_t r = 0; r < out.rows; ++r) {
    for (std::size_t c = 0; c < out.cols; ++c) out(r, c) += bv.data[c];
  }
  const auto ia = a.id(), ib = bias.id();
  return a.tape().record(std::move(out), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(ia)) {
      auto& d = t.grad_buffer(ia).data;
      for (std::size_t i = 0; i < g.data.size(); ++i) d[i] += g.data[i];
    }
    if (t.requires_grad(ib)) {
      auto& d = t.grad_buffer(ib).data;
      for (std::size_t r = 0; r < g.rows; ++r) {
        for (std::size_t c = 0; c < g.cols; ++c) d[c] += g(r, c);
      }
    }
  });
}

Var relu(Var a) {
  Tensor out = a.value();
  for (auto& x : out.data) x = x > 0.0 ? x : 0.0;
  const auto ia = a.id();
  return a.tape().record(std::move(out), {ia}, [ia](Tape& t, std::size_t self) {
    const auto& g = t.grad(self).data;
    const auto& in = t.value(ia).data;
    auto& d = t.grad_buffer(ia).data;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (in[i] > 0.0) d[i] += g[i];
    }
  });
}

Var concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeMismatch("concat", "no inputs");
  const auto rows = parts.front().rows();
  std::size_t cols = 0;
  std::vector<std::size_t> ids;
  for (const auto& p : parts) {
    same_tape(parts.front(), p);
    if (p.rows() != rows) throw ShapeMismatch("concat", parts.front().value(), p.value());
    cols += p.cols();
    ids.push_back(p.id());
  }
  Tensor out(rows, cols);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const auto& v = p.value();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(v.data.data() + r * v.cols, v.cols, out.data.data() + r * cols + offset);
    }
    offset += v.cols;
  }
  return parts.front().tape().record(std::move(out), ids, [ids](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    std::size_t offset = 0;
    for (auto id : ids) {
      const auto w = t.value(id).cols;
      if (t.requires_grad(id)) {
        auto& d = t.grad_buffer(id).data;
        for (std::size_t r = 0; r < g.rows; ++r) {
          for (std::size_t c = 0; c < w; ++c) d[r * w + c] += g(r, offset + c);
        }
      }
      offset += w;
    }
  });
}

Var gather_rows(Var a, Index index) {
  const auto& av = a.value();
  Tensor out(index->size(), av.cols);
  for (std::size_t i = 0; i < index->size(); ++i) {
    const auto src = (*index)[i];
    if (src >= av.rows) throw ShapeMismatch("gather_rows", "row index " + std::to_string(src) + " out of range");
    std::copy_n(av.data.data() + src * av.cols, av.cols, out.data.data() + i * av.cols);
  }
  const auto ia = a.id();
  return a.tape().record(std::move(out), {ia}, [ia, index](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& d = t.grad_buffer(ia);
    for (std::size_t i = 0; i < index->size(); ++i) {
      double* row = d.data.data() + (*index)[i] * d.cols;
      const double* grow = g.data.data() + i * g.cols;
      for (std::size_t c = 0; c < g.cols; ++c) row[c] += grow[c];
    }
  });
}

Var segment_max(Var values, Index segments, std::size_t segment_count) {
  const auto& v = values.value();
  if (segments->size() != v.rows) {
    throw ShapeMismatch("segment_max", "segment ids for " + std::to_string(segments->size()) +
                                           " rows, values have " + std::to_string(v.rows));
  }
  const auto k = v.cols;
  Tensor out(segment_count, k);
  // argmax row per (segment, column); npos marks an empty segment.
  constexpr auto npos = std::numeric_limits<std::uint32_t>::max();
  auto argmax = std::make_shared<std::vector<std::uint32_t>>(segment_count * k, npos);
  for (std::uint32_t r = 0; r < v.rows; ++r) {
    const auto s = (*segments)[r];
    if (s >= segment_count) throw ShapeMismatch("segment_max", "segment id out of range");
    for (std::size_t c = 0; c < k; ++c) {
      auto& best = (*argmax)[s * k + c];
      if (best == npos || v(r, c) > v(best, c)) best = r;
    }
  }
  for (std::size_t s = 0; s < segment_count; ++s) {
    for (std::size_t c = 0; c < k; ++c) {
      const auto best = (*argmax)[s * k + c];
      out(s, c) = best == npos ? 0.0 : v(best, c);
    }
  }
  const auto iv = values.id();
  return values.tape().record(std::move(out), {iv}, [iv, argmax, k](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& d = t.grad_buffer(iv);
    for (std::size_t s = 0; s < g.rows; ++s) {
      for (std::size_t c = 0; c < k; ++c) {
        const auto best = (*argmax)[s * k + c];
        if (best != npos) d(best, c) += g(s, c);
      }
    }
  });
}

Var softmax_cross_entropy(Var logits, Index segments, std::size_t segment_count, Index targets) {
  const auto& z = logits.value();
  if (z.cols != 1) throw ShapeMismatch("softmax_cross_entropy", "logits must be a column");
  if (segments->size() != z.rows || targets->size() != segment_count) {
    throw ShapeMismatch("softmax_cross_entropy", "segment/target sizes disagree with logits");
  }
  std::vector<double> seg_max(segment_count, -std::numeric_limits<double>::infinity());
  for (std::size_t r = 0; r < z.rows; ++r) {
    const auto s = (*segments)[r];
    if (s >= segment_count) throw ShapeMismatch("softmax_cross_entropy", "segment id out of range");
    seg_max[s] = std::max(seg_max[s], z.data[r]);
  }
  std::vector<double> seg_sum(segment_count, 0.0);
  for (std::size_t r = 0; r < z.rows; ++r) {
    const auto s = (*segments)[r];
    seg_sum[s] += std::exp(z.data[r] - seg_max[s]);
  }
  double loss = 0.0;
  for (std::size_t s = 0; s < segment_count; ++s) {
    const auto target = (*targets)[s];
    if (seg_sum[s] == 0.0) throw ShapeMismatch("softmax_cross_entropy", "empty segment");
    if (target >= z.rows || (*segments)[target] != s) {
      throw ShapeMismatch("softmax_cross_entropy", "target row outside its segment");
    }
    const double log_norm = seg_max[s] + std::log(seg_sum[s]);
    loss += log_norm - z.data[target];
  }
  const double n = static_cast<double>(segment_count);
  // Cache per-row probabilities for backward.
  auto prob = std::make_shared<std::vector<double>>(z.rows);
  for (std::size_t r = 0; r < z.rows; ++r) {
    const auto s = (*segments)[r];
    (*prob)[r] = std::exp(z.data[r] - seg_max[s]) / seg_sum[s];
  }
  const auto il = logits.id();
  return logits.tape().record(
      Tensor::scalar(loss / n), {il}, [il, prob, segments, targets, n](Tape& t, std::size_t self) {
        const double g = t.grad(self).data[0] / n;
        auto& d = t.grad_buffer(il).data;
        for (std::size_t r = 0; r < d.size(); ++r) d[r] += g * (*prob)[r];
        for (auto target : *targets) d[target] -= g;
      });
}

Var l2_norm_squared(Var a) {
  double acc = 0.0;
  for (double x : a.value().data) acc += x * x;
  const auto ia = a.id();
  return a.tape().record(Tensor::scalar(acc), {ia}, [ia](Tape& t, std::size_t self) {
    const double g = t.grad(self).data[0];
    const auto& in = t.value(ia).data;
    auto& d = t.grad_buffer(ia).data;
    for (std::size_t i = 0; i < in.size(); ++i) d[i] += 2.0 * g * in[i];
  });
}

Var sum(Var a) {
  double acc = 0.0;
  for (double x : a.value().data) acc += x;
  const auto ia = a.id();
  return a.tape().record(Tensor::scalar(acc), {ia}, [ia](Tape& t, std::size_t self) {
    const double g = t.grad(self).data[0];
    for (auto& x : t.grad_buffer(ia).data) x += g;
  });
}

Var element(Var a, std::size_t row, std::size_t col) {
  const auto& av = a.value();
  if (row >= av.rows || col >= av.cols) throw ShapeMismatch("element", "index out of range");
  const auto ia = a.id();
  return a.tape().record(Tensor::scalar(av(row, col)), {ia}, [ia, row, col](Tape& t, std::size_t self) {
    t.grad_buffer(ia)(row, col) += t.grad(self).data[0];
  });
}

}  // namespace narstar::ad
