#pragma once

// Stage-aware LSTM cell.
//
// Besides the usual forget/input/output gates, the cell carries two "master"
// gates computed as cumulative sums of softmax distributions over
// levels = hidden / chunk positions. The master forget gate rises from ~0 to
// exactly 1 and marks the cell dimensions that keep old history; the master
// input gate falls from exactly 1 and marks dimensions that take the new
// candidate. Each level is shared by `chunk` consecutive cell dimensions.
// Every affine map consumes the interval-augmented inputs v_t ⊕ Δ_t and
// h_{t-1} ⊕ Δ_t.

#include <cstddef>
#include <optional>
#include <vector>

#include "stagenet/autodiff.hpp"
#include "stagenet/data.hpp"
#include "stagenet/rng.hpp"

namespace stagenet {

struct StageCellDims {
  std::size_t n_features = 0;
  std::size_t hidden = 0;
  std::size_t chunk = 1;
  /// false gives the plain LSTM ablation (master gates fixed at all-ones).
  bool master_gates = true;

  std::size_t levels() const { return hidden / chunk; }
  /// Throws ConfigError unless hidden % chunk == 0 and levels() >= 2.
  void validate() const;
};

/// W (out × (n_features+1)), U (out × (hidden+1)) and bias (out × 1).
struct AffineGate {
  Param w;
  Param u;
  Param b;
};

struct StageCellParams {
  StageCellDims dims;
  AffineGate master_forget;  // onto levels()
  AffineGate master_input;   // onto levels()
  AffineGate forget;
  AffineGate input;
  AffineGate output;
  AffineGate candidate;

  explicit StageCellParams(const StageCellDims& dims);

  /// Weights uniform in ±1/sqrt(fan_in), biases zero.
  void initialize(Rng& rng);
  std::vector<Param*> parameters();
  std::vector<AffineGate*> gates();
};

/// Bernoulli keep-masks for the recurrent matrices, already scaled by
/// 1/(1-p). One mask per U matrix, indexed like StageCellParams::gates().
struct DropconnectMasks {
  std::vector<std::vector<double>> keep;

  static DropconnectMasks sample(StageCellParams& params, double drop_p, Rng& rng);
};

struct BoundGate {
  Var w, u, b;
};

/// Parameters placed on one graph, with dropconnect already applied.
struct BoundStageCell {
  StageCellDims dims;
  std::optional<BoundGate> master_forget;
  std::optional<BoundGate> master_input;
  BoundGate forget, input, output, candidate;
};

BoundStageCell bind(Graph& g, StageCellParams& params, const DropconnectMasks* masks = nullptr);

struct MasterGates {
  Var forget;       // f̃, nondecreasing, last entry 1
  Var input;        // ĩ, nonincreasing, first entry 1
  Var forget_dist;  // p_f̃
  Var input_dist;   // p_ĩ
};

/// Master gates for interval-augmented inputs x_aug = v ⊕ Δ, h_aug = h ⊕ Δ.
MasterGates master_gates(const BoundStageCell& cell, Var x_aug, Var h_aug);

/// Master gates from given level distributions (forward cumsum of p_f̃,
/// backward cumsum of p_ĩ).
MasterGates master_gates_from(Var forget_dist, Var input_dist);

struct StageVariation {
  Var s;       // levels * s_norm + 1, in [1, levels + 1)
  Var s_norm;  // 1 - mean(f̃), in (0, 1)
};

StageVariation stage_variation(Var master_forget);

/// Cell-state update with full-width master gates:
///   w = f̃ ⊙ ĩ
///   c = w ⊙ (f ⊙ c_prev + i ⊙ ĉ) + (f̃ − w) ⊙ c_prev + (ĩ − w) ⊙ ĉ
struct CellUpdate {
  Var c;
  Var overlap;  // w
};
CellUpdate cell_update(Var master_forget, Var master_input, Var forget, Var input, Var c_prev,
                       Var candidate);

struct CellStep {
  Var h;
  Var c;
  StageVariation variation;
  std::optional<MasterGates> gates;  // level-width gates
  std::optional<Var> overlap;
};

/// One timestep. `delta` must already be divided by delta_scale.
CellStep cell_step(const BoundStageCell& cell, Var v, double delta, Var h_prev, Var c_prev);

/// Value snapshot of the recurrent state after one step.
struct StageCellState {
  std::vector<double> h;
  std::vector<double> c;
  double s = 1.0;
  double s_norm = 0.0;
};

/// Runs the cell over a sequence from zero state. Padded steps (mask = 0)
/// carry the state through and emit nothing. Throws InputError for an empty
/// sequence.
std::vector<StageCellState> unroll(StageCellParams& params, const PatientSequence& seq,
                                   double delta_scale = 1.0);

}  // namespace stagenet
