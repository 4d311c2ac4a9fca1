#pragma once

#include <array>
#include <vector>

#include "narstar/model.hpp"

namespace narstar {

/// Compiled 1-step heuristic inference for a fixed parameter set.
///
/// At the first step every latent is zero, so a node is described only by its
/// type (plain / source / target) and a message depends only on the two
/// endpoint types and the scalar edge weight. With two-layer message MLPs each
/// message is then a piecewise-affine function of the weight, with one
/// breakpoint per hidden unit. The kernel stores those pieces, makes a single
/// pass over the undirected edges recording, per node and piece, the lightest
/// and heaviest incoming plain-plain weight (an affine function attains its
/// maximum over a set at one of the two extremes), and evaluates the arcs that
/// touch the source or the target exactly. The update MLP and heuristic
/// decoder are folded into one hidden layer per node.
///
/// Results equal NarModel::infer_heuristic up to floating-point
/// reassociation. Models with deeper MLPs fall back to an exact per-arc pass.
class HeuristicKernel {
 public:
  explicit HeuristicKernel(const NarModel& model);

  HeuristicField infer(const ProblemInstance& instance) const;
  HeuristicField operator()(const ProblemInstance& instance) const { return infer(instance); }

  bool piecewise() const noexcept { return piecewise_; }

 private:
  static constexpr std::size_t kTypes = 3;  // plain, source, target

  /// F(w) = W2^T relu(c + w r) + b2 split at the ReLU breakpoints.
  struct PiecewiseMessage {
    std::vector<double> breakpoints;  // ascending
    std::vector<double> alpha;        // (pieces x hidden)
    std::vector<double> beta;         // (pieces x hidden)
    std::vector<double> rising;       // max(beta, 0)
    std::vector<double> falling;      // min(beta, 0)
    std::size_t piece(double w) const;
  };

  void message(std::size_t dst_type, std::size_t src_type, double w, double* out) const;
  HeuristicField infer_generic(const ProblemInstance& instance) const;

  std::size_t hidden_ = 0;
  std::size_t mlp_hidden_ = 0;
  bool piecewise_ = false;

  // First message layer, collapsed per (dst type, src type): c + w r.
  std::array<std::array<std::vector<double>, kTypes>, kTypes> first_bias_;
  std::vector<double> edge_slope_;
  std::array<std::array<PiecewiseMessage, kTypes>, kTypes> pieces_;
  std::array<std::vector<double>, kTypes> self_message_;

  // Message layers after the first (generic path only).
  std::vector<std::vector<double>> msg_weights_;  // row-major (in x out)
  std::vector<std::vector<double>> msg_biases_;

  // Update MLP + decoder.
  std::array<std::vector<double>, kTypes> update_bias_;  // z_type W + b, width mlp_hidden
  std::vector<double> update_agg_;                       // (hidden x mlp_hidden)
  std::vector<std::vector<double>> upd_weights_;         // layers after the first
  std::vector<std::vector<double>> upd_biases_;
  std::vector<double> readout_;                          // folded output weights (piecewise path)
  std::array<double, kTypes> readout_bias_{};
  std::vector<double> decoder_h_;                        // h block of the heuristic decoder
  std::array<double, kTypes> decoder_z_{};               // z_type . decoder z block
};

}  // namespace narstar
