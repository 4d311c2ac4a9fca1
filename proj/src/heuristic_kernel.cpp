#include "narstar/heuristic_kernel.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <limits>

namespace narstar {

namespace {

const std::vector<double>& values(const NarModel& model, const std::string& name) {
  return model.parameters().at(name).value.data;
}

// out[j] = bias[j] + sum_k in[k] * w[k * cols + j]
void affine(const double* in, std::size_t rows, const std::vector<double>& w, const std::vector<double>& bias,
            double* out) {
  const std::size_t cols = bias.size();
  std::copy(bias.begin(), bias.end(), out);
  for (std::size_t k = 0; k < rows; ++k) {
    const double x = in[k];
    if (x == 0.0) continue;
    const double* row = w.data() + k * cols;
    for (std::size_t j = 0; j < cols; ++j) out[j] += x * row[j];
  }
}

using v2d = double __attribute__((vector_size(16), aligned(8)));

v2d load2(const double* p) { return v2d{p[0], p[1]}; }

std::size_t type_of(const ProblemInstance& instance, NodeId v) {
  if (v == instance.source) return 1;
  if (v == instance.target) return 2;
  return 0;
}

}  // namespace

std::size_t HeuristicKernel::PiecewiseMessage::piece(double w) const {
  return static_cast<std::size_t>(std::upper_bound(breakpoints.begin(), breakpoints.end(), w) -
                                  breakpoints.begin());
}

HeuristicKernel::HeuristicKernel(const NarModel& model)
    : hidden_(model.config().hidden_dim),
      mlp_hidden_(model.config().mlp_hidden),
      piecewise_(model.config().mlp_layers == 2) {
  const auto H = hidden_;
  const auto M = mlp_hidden_;
  const auto L = model.config().mlp_layers;

  // Encoded node rows by type: plain nodes encode to zero.
  const auto& enc_node = values(model, "encoder.node");
  std::array<std::vector<double>, kTypes> z;
  z[0].assign(H, 0.0);
  z[1].assign(enc_node.begin(), enc_node.begin() + static_cast<std::ptrdiff_t>(H));
  z[2].assign(enc_node.begin() + static_cast<std::ptrdiff_t>(H), enc_node.end());

  const auto& w_dst = values(model, "message.0.dst");
  const auto& w_src = values(model, "message.0.src");
  const auto& b0 = values(model, "message.0.bias");
  std::array<std::vector<double>, kTypes> dst_part, src_part;
  const std::vector<double> no_bias(M, 0.0);
  for (std::size_t a = 0; a < kTypes; ++a) {
    dst_part[a].resize(M);
    src_part[a].resize(M);
    affine(z[a].data(), H, w_dst, no_bias, dst_part[a].data());
    affine(z[a].data(), H, w_src, no_bias, src_part[a].data());
  }
  for (std::size_t a = 0; a < kTypes; ++a) {
    for (std::size_t b = 0; b < kTypes; ++b) {
      auto& c = first_bias_[a][b];
      c.resize(M);
      for (std::size_t j = 0; j < M; ++j) c[j] = dst_part[a][j] + src_part[b][j] + b0[j];
    }
  }
  edge_slope_.resize(M);
  affine(values(model, "encoder.edge").data(), H, values(model, "message.0.edge"), no_bias, edge_slope_.data());

  for (std::size_t i = 1; i < L; ++i) {
    const auto k = std::to_string(i);
    msg_weights_.push_back(values(model, "message." + k + ".weight"));
    msg_biases_.push_back(values(model, "message." + k + ".bias"));
    upd_weights_.push_back(values(model, "update." + k + ".weight"));
    upd_biases_.push_back(values(model, "update." + k + ".bias"));
  }

  if (piecewise_) {
    const auto& w1 = msg_weights_.front();
    const auto& b1 = msg_biases_.front();
    for (std::size_t a = 0; a < kTypes; ++a) {
      for (std::size_t b = 0; b < kTypes; ++b) {
        const auto& c = first_bias_[a][b];
        auto& pm = pieces_[a][b];
        for (std::size_t j = 0; j < M; ++j) {
          if (edge_slope_[j] != 0.0) pm.breakpoints.push_back(-c[j] / edge_slope_[j]);
        }
        std::sort(pm.breakpoints.begin(), pm.breakpoints.end());
        pm.breakpoints.erase(std::unique(pm.breakpoints.begin(), pm.breakpoints.end()), pm.breakpoints.end());
        const auto K = pm.breakpoints.size();
        pm.alpha.assign((K + 1) * H, 0.0);
        pm.beta.assign((K + 1) * H, 0.0);
        for (std::size_t p = 0; p <= K; ++p) {
          double probe = 0.0;
          if (K > 0) {
            if (p == 0) probe = pm.breakpoints.front() - 1.0;
            else if (p == K) probe = pm.breakpoints.back() + 1.0;
            else probe = 0.5 * (pm.breakpoints[p - 1] + pm.breakpoints[p]);
          }
          double* alpha = pm.alpha.data() + p * H;
          double* beta = pm.beta.data() + p * H;
          std::copy(b1.begin(), b1.end(), alpha);
          for (std::size_t j = 0; j < M; ++j) {
            if (!(c[j] + probe * edge_slope_[j] > 0.0)) continue;
            const double* row = w1.data() + j * H;
            for (std::size_t h = 0; h < H; ++h) {
              alpha[h] += c[j] * row[h];
              beta[h] += edge_slope_[j] * row[h];
            }
          }
        }
        pm.rising.resize(pm.beta.size());
        pm.falling.resize(pm.beta.size());
        for (std::size_t i = 0; i < pm.beta.size(); ++i) {
          pm.rising[i] = std::max(pm.beta[i], 0.0);
          pm.falling[i] = std::min(pm.beta[i], 0.0);
        }
      }
    }
  }

  // Self-arcs carry weight 0 and evaluate exactly once per type.
  for (std::size_t a = 0; a < kTypes; ++a) {
    self_message_[a].resize(H);
    const bool saved = piecewise_;
    piecewise_ = false;
    message(a, a, 0.0, self_message_[a].data());
    piecewise_ = saved;
  }

  const auto& u0 = values(model, "update.0.weight");
  const auto& ub0 = values(model, "update.0.bias");
  for (std::size_t a = 0; a < kTypes; ++a) {
    update_bias_[a].resize(M);
    affine(z[a].data(), H, u0, ub0, update_bias_[a].data());
  }
  // Rows [2H, 3H) act on the aggregate; the h_prev block meets zeros.
  update_agg_.assign(u0.begin() + static_cast<std::ptrdiff_t>(2 * H * M), u0.end());

  const auto& heur = values(model, "decoder.heuristic");
  decoder_h_.assign(heur.begin() + static_cast<std::ptrdiff_t>(H), heur.begin() + static_cast<std::ptrdiff_t>(2 * H));
  for (std::size_t a = 0; a < kTypes; ++a) {
    double s = 0.0;
    for (std::size_t h = 0; h < H; ++h) s += z[a][h] * heur[h];
    decoder_z_[a] = s;
  }
  if (piecewise_) {
    const auto& w1 = upd_weights_.front();
    const auto& b1 = upd_biases_.front();
    readout_.assign(M, 0.0);
    for (std::size_t j = 0; j < M; ++j) {
      for (std::size_t h = 0; h < H; ++h) readout_[j] += w1[j * H + h] * decoder_h_[h];
    }
    double bias_term = 0.0;
    for (std::size_t h = 0; h < H; ++h) bias_term += b1[h] * decoder_h_[h];
    for (std::size_t a = 0; a < kTypes; ++a) readout_bias_[a] = decoder_z_[a] + bias_term;
  }
}

void HeuristicKernel::message(std::size_t dst_type, std::size_t src_type, double w, double* out) const {
  const auto H = hidden_;
  if (piecewise_) {
    const auto& pm = pieces_[dst_type][src_type];
    const auto p = pm.piece(w);
    const double* alpha = pm.alpha.data() + p * H;
    const double* beta = pm.beta.data() + p * H;
    for (std::size_t h = 0; h < H; ++h) out[h] = alpha[h] + beta[h] * w;
    return;
  }
  const auto& c = first_bias_[dst_type][src_type];
  std::vector<double> cur(c.size());
  for (std::size_t j = 0; j < c.size(); ++j) cur[j] = std::max(0.0, c[j] + w * edge_slope_[j]);
  std::vector<double> next;
  for (std::size_t i = 0; i < msg_weights_.size(); ++i) {
    next.resize(msg_biases_[i].size());
    affine(cur.data(), cur.size(), msg_weights_[i], msg_biases_[i], next.data());
    if (i + 1 < msg_weights_.size()) {
      for (auto& x : next) x = std::max(0.0, x);
    }
    cur.swap(next);
  }
  std::copy(cur.begin(), cur.end(), out);
}

HeuristicField HeuristicKernel::infer(const ProblemInstance& instance) const {
  if (!piecewise_) return infer_generic(instance);
  const auto& graph = instance.graph;
  const auto n = graph.node_count();
  const auto H = hidden_;
  const auto M = mlp_hidden_;

  std::vector<std::uint8_t> type(n, 0);
  type[instance.source] = 1;
  type[instance.target] = 2;

  std::vector<double> agg(n * H);
  for (NodeId v = 0; v < n; ++v) {
    const auto& self = self_message_[type[v]];
    std::copy(self.begin(), self.end(), agg.begin() + static_cast<std::ptrdiff_t>(v * H));
  }

  // Plain-plain arcs: only the breakpoints inside this graph's weight range
  // split its edges.
  const auto& pp = pieces_[0][0];
  const auto first = std::lower_bound(pp.breakpoints.begin(), pp.breakpoints.end(), graph.min_weight());
  const auto last = std::upper_bound(first, pp.breakpoints.end(), graph.max_weight());
  const auto base = static_cast<std::size_t>(first - pp.breakpoints.begin());
  const std::vector<double> inner(first, last);

  const NodeId s = instance.source;
  const NodeId t = instance.target;
  std::vector<double> tmp(H);
  auto exact_arc = [&](NodeId from, NodeId to, double w) {
    message(type[to], type[from], w, tmp.data());
    double* into = agg.data() + to * H;
    for (std::size_t h = 0; h < H; ++h) into[h] = std::max(into[h], tmp[h]);
  };
  auto upper_arcs = [&](NodeId u) {
    const auto arcs = graph.neighbors(u);
    const auto it = std::upper_bound(arcs.begin(), arcs.end(), u, [](NodeId x, const Arc& a) { return x < a.dst; });
    return arcs.subspan(static_cast<std::size_t>(it - arcs.begin()));
  };

  // (lightest, heaviest) weight per node and piece. Each edge is visited once
  // from its smaller endpoint, whose extremes stay in a local buffer.
  constexpr double inf = std::numeric_limits<double>::infinity();
  constexpr std::size_t kMaxInner = 3;
  std::vector<double> extremes;
  auto scan = [&]<std::size_t K>() {
    constexpr std::size_t P = K + 1;
    extremes.resize(n * P * 2);
    for (std::size_t q = 0; q < extremes.size(); q += 2) {
      extremes[q] = inf;
      extremes[q + 1] = -inf;
    }
    std::array<double, K + 1> b{};
    std::copy(inner.begin(), inner.end(), b.begin());
    std::array<double, P * 2> local;
    for (NodeId u = 0; u < n; ++u) {
      const auto arcs = upper_arcs(u);
      if (u == s || u == t) {
        for (const Arc& a : arcs) {
          exact_arc(u, a.dst, a.weight);
          exact_arc(a.dst, u, a.weight);
        }
        continue;
      }
      for (std::size_t q = 0; q < local.size(); q += 2) {
        local[q] = inf;
        local[q + 1] = -inf;
      }
      for (const Arc& a : arcs) {
        const NodeId v = a.dst;
        const double w = a.weight;
        if (v == s || v == t) {
          exact_arc(u, v, w);
          exact_arc(v, u, w);
          continue;
        }
        std::size_t k = 0;
        for (std::size_t j = 0; j < K; ++j) k += b[j] < w;
        double* xv = extremes.data() + (v * P + k) * 2;
        xv[0] = std::min(xv[0], w);
        xv[1] = std::max(xv[1], w);
        double* xu = local.data() + k * 2;
        xu[0] = std::min(xu[0], w);
        xu[1] = std::max(xu[1], w);
      }
      double* xu = extremes.data() + u * P * 2;
      for (std::size_t q = 0; q < P * 2; q += 2) {
        xu[q] = std::min(xu[q], local[q]);
        xu[q + 1] = std::max(xu[q + 1], local[q + 1]);
      }
    }
  };
  std::size_t P = inner.size() + 1;
  switch (inner.size()) {
    case 0: scan.template operator()<0>(); break;
    case 1: scan.template operator()<1>(); break;
    case 2: scan.template operator()<2>(); break;
    case 3: scan.template operator()<3>(); break;
    default:
      // Too many pieces in range: evaluate every arc directly.
      static_assert(kMaxInner == 3);
      P = 0;
      for (NodeId u = 0; u < n; ++u) {
        for (const Arc& a : upper_arcs(u)) {
          exact_arc(u, a.dst, a.weight);
          exact_arc(a.dst, u, a.weight);
        }
      }
  }

  HeuristicField field;
  field.values.resize(n);
  for (NodeId v = 0; v < n; ++v) {
    double* a = agg.data() + v * H;
    const double* x = extremes.data() + v * P * 2;
    for (std::size_t k = 0; k < P; ++k, x += 2) {
      if (x[0] == inf) continue;
      const double lo = x[0];
      const double hi = x[1];
      const double* alpha = pp.alpha.data() + (base + k) * H;
      const double* rising = pp.rising.data() + (base + k) * H;
      const double* falling = pp.falling.data() + (base + k) * H;
      for (std::size_t h = 0; h < H; ++h) {
        a[h] = std::max(a[h], alpha[h] + (rising[h] * hi + falling[h] * lo));
      }
    }
    const auto vt = type[v];
    const double* bias = update_bias_[vt].data();
    double y = readout_bias_[vt];
    std::size_t j = 0;
    for (; j + 8 <= M; j += 8) {
      v2d p0 = load2(bias + j), p1 = load2(bias + j + 2), p2 = load2(bias + j + 4), p3 = load2(bias + j + 6);
      const double* col = update_agg_.data() + j;
      for (std::size_t h = 0; h < H; ++h, col += M) {
        const v2d ah = {a[h], a[h]};
        p0 += ah * load2(col);
        p1 += ah * load2(col + 2);
        p2 += ah * load2(col + 4);
        p3 += ah * load2(col + 6);
      }
      const double* r = readout_.data() + j;
      y += std::max(0.0, p0[0]) * r[0] + std::max(0.0, p0[1]) * r[1] + std::max(0.0, p1[0]) * r[2] +
           std::max(0.0, p1[1]) * r[3] + std::max(0.0, p2[0]) * r[4] + std::max(0.0, p2[1]) * r[5] +
           std::max(0.0, p3[0]) * r[6] + std::max(0.0, p3[1]) * r[7];
    }
    for (; j < M; ++j) {
      double pj = bias[j];
      for (std::size_t h = 0; h < H; ++h) pj += a[h] * update_agg_[h * M + j];
      y += std::max(0.0, pj) * readout_[j];
    }
    field.values[v] = y;
  }
  return field;
}

HeuristicField HeuristicKernel::infer_generic(const ProblemInstance& instance) const {
  const auto& graph = instance.graph;
  const auto n = graph.node_count();
  const auto H = hidden_;
  std::vector<double> agg(n * H);
  for (NodeId v = 0; v < n; ++v) {
    const auto& self = self_message_[type_of(instance, v)];
    std::copy(self.begin(), self.end(), agg.begin() + static_cast<std::ptrdiff_t>(v * H));
  }
  std::vector<double> tmp(H);
  for (const Edge& e : graph.edges()) {
    const auto tu = type_of(instance, e.u);
    const auto tv = type_of(instance, e.v);
    message(tv, tu, e.weight, tmp.data());
    for (std::size_t h = 0; h < H; ++h) agg[e.v * H + h] = std::max(agg[e.v * H + h], tmp[h]);
    message(tu, tv, e.weight, tmp.data());
    for (std::size_t h = 0; h < H; ++h) agg[e.u * H + h] = std::max(agg[e.u * H + h], tmp[h]);
  }

  HeuristicField field;
  field.values.resize(n);
  std::vector<double> cur(mlp_hidden_), next;
  for (NodeId v = 0; v < n; ++v) {
    const auto t = type_of(instance, v);
    cur.resize(mlp_hidden_);
    affine(agg.data() + v * H, H, update_agg_, update_bias_[t], cur.data());
    for (std::size_t i = 0; i < upd_weights_.size(); ++i) {
      for (auto& x : cur) x = std::max(0.0, x);
      next.resize(upd_biases_[i].size());
      affine(cur.data(), cur.size(), upd_weights_[i], upd_biases_[i], next.data());
      cur.swap(next);
    }
    double y = decoder_z_[t];
    for (std::size_t h = 0; h < H; ++h) y += cur[h] * decoder_h_[h];
    field.values[v] = y;
  }
  return field;
}

}  // namespace narstar
