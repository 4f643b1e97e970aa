#pragma once

// Stage-adaptive convolution over the last K hidden states.
//
// Window positions run oldest (row 0) to newest (row K-1). Stage weights are
// softmax(forward cumsum of the window's normalised stage variations): a
// large variation at position k lifts the logits of every position from k
// onward, so states from before a stage change lose weight. Each of the
// `hidden` kernels spans the whole window (kernel size = K) and yields one
// scalar. The progression theme (stage-weighted mean of the window) drives a
// squeeze/excite bottleneck that rescales the kernel outputs.

#include <cstddef>
#include <deque>
#include <vector>

#include "stagenet/autodiff.hpp"
#include "stagenet/rng.hpp"

namespace stagenet {

struct StageConvParams {
  std::size_t hidden = 0;
  std::size_t window = 0;
  std::size_t bottleneck = 0;
  /// hidden × (window·hidden); entry [i][k·hidden + j] weighs channel j at
  /// window position k for kernel i.
  Param kernels;
  Param squeeze;  // bottleneck × hidden
  Param excite;   // hidden × bottleneck

  /// Throws ConfigError unless window >= 1 and 1 <= bottleneck < hidden.
  StageConvParams(std::size_t hidden, std::size_t window, std::size_t bottleneck);

  void initialize(Rng& rng);
  std::vector<Param*> parameters();
};

/// Rolling buffer of the K most recent (h, s_norm) pairs; earlier slots are
/// zero rows with zero variation.
class StageWindow {
 public:
  StageWindow(Graph& g, std::size_t window, std::size_t hidden);

  void push(Var h, Var s_norm);

  /// K × hidden matrix of hidden states, oldest first.
  Var states() const;
  /// Length-K vector of normalised stage variations, oldest first.
  Var variations() const;

  std::size_t window() const { return window_; }

 private:
  Graph* graph_;
  std::size_t window_;
  std::deque<Var> h_;
  std::deque<Var> s_;
};

/// softmax(forward cumsum(s_norm window)).
Var stage_weights(Var variations);

/// u[i] = Σ_j Σ_k M[i][k·hidden + j] · H[k][j] · Δs[k]
Var stage_conv(Var states, Var weights, Var kernels);

/// z = (1/K) Σ_k Δs[k] · H[k]
Var progression_theme(Var states, Var weights);

struct Recalibration {
  Var u_tilde;
  Var attention;  // x = σ(excite · relu(squeeze · z)), entries in (0, 1)
};

Recalibration recalibrate(Var u, Var theme, Var excite, Var squeeze);

}  // namespace stagenet
