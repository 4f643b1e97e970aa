#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stagenet/autodiff.hpp"
#include "stagenet/data.hpp"
#include "stagenet/rng.hpp"
#include "stagenet/stage_conv.hpp"
#include "stagenet/stage_lstm.hpp"

namespace stagenet {

enum class ModelVariant {
  kStageNet,  // stage-aware LSTM + stage-adaptive convolution + residual head
  kLstm,      // ablation: master gates fixed to ones, convolution bypassed
};

std::string to_string(ModelVariant v);
ModelVariant parse_variant(const std::string& s);

struct ModelConfig {
  std::size_t n_features = 0;
  std::size_t hidden = 72;
  std::size_t chunk = 36;
  std::size_t window = 10;
  std::size_t bottleneck = 0;  // 0 selects max(hidden / 2, 1)
  double dropout = 0.5;
  double dropconnect = 0.3;
  double delta_scale = 1.0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip = 5.0;  // global-norm clip; 0 disables
  std::size_t epochs = 50;
  std::size_t batch_size = 0;  // 0 selects 16 below 1000 patients, else 64
  std::size_t max_len = 400;
  std::uint64_t seed = 42;
  double label_clip = 1e-7;
  ModelVariant variant = ModelVariant::kStageNet;

  std::size_t levels() const { return chunk == 0 ? 0 : hidden / chunk; }
  std::size_t resolved_bottleneck() const;
  std::size_t resolved_batch_size(std::size_t n_patients) const;
  /// Throws ConfigError naming the offending values.
  void validate() const;
};

/// Per valid timestep of one patient.
struct PredictionStep {
  std::size_t t = 0;  // index into the (unpadded) visit sequence
  double y_hat = 0.5;
  double s = 1.0;
  double s_norm = 0.0;
  std::vector<double> u_tilde;
  std::vector<double> h;
};

struct PredictionTrace {
  std::vector<PredictionStep> steps;
};

enum class Mode { kTrain, kEval };

/// Randomness for one train-mode forward pass. Dropconnect masks are shared
/// by all patients of a batch; dropout masks are drawn from `rng` per step.
struct TrainNoise {
  const DropconnectMasks* dropconnect = nullptr;
  Rng* rng = nullptr;
};

class StageNetModel {
 public:
  explicit StageNetModel(const ModelConfig& config);
  StageNetModel(const StageNetModel&) = delete;
  StageNetModel& operator=(const StageNetModel&) = delete;

  const ModelConfig& config() const { return config_; }
  StageCellParams& cell() { return cell_; }
  StageConvParams& conv() { return conv_; }
  Param& output_weight() { return w_y_; }
  Param& output_bias() { return b_y_; }

  void initialize(Rng& rng);
  /// Learnable tensors in a fixed order; the LSTM ablation omits master gates
  /// and the convolution.
  std::vector<Param*> parameters();
  void zero_grad();

 private:
  ModelConfig config_;
  StageCellParams cell_;
  StageConvParams conv_;
  Param w_y_;  // 1 × hidden
  Param b_y_;  // 1 × 1
};

/// Graph nodes of one patient's forward pass.
struct ForwardGraph {
  std::vector<Var> y_hat;  // one scalar per valid step
  std::vector<int> labels;
  PredictionTrace trace;
};

ForwardGraph build_forward(Graph& g, StageNetModel& model, const PatientSequence& seq,
                           Mode mode, const TrainNoise& noise = {});

/// Eval-mode prediction. Deterministic and safe to call concurrently for a
/// frozen model.
PredictionTrace forward(StageNetModel& model, const PatientSequence& seq);

/// Train-mode prediction with explicit noise (for determinism checks).
PredictionTrace forward(StageNetModel& model, const PatientSequence& seq, Mode mode,
                        const TrainNoise& noise);

/// −(1/T) Σ [y log ŷ + (1−y) log(1−ŷ)] with ŷ clamped to [clip, 1−clip].
Var sequence_loss(std::span<const Var> y_hat, std::span<const int> labels, double clip);

/// Value version over padded arrays; steps with mask = 0 are skipped.
double sequence_loss(std::span<const double> y_hat, std::span<const int> labels,
                     std::span<const std::uint8_t> mask, double clip);

/// Mean over patients of the per-patient loss, in eval mode.
double dataset_loss(StageNetModel& model, const Dataset& data);

/// Eval-mode traces for every patient, fanned out over `threads` workers and
/// returned in patient order. 0 uses the hardware concurrency.
std::vector<PredictionTrace> predict_all(StageNetModel& model, const Dataset& data,
                                         std::size_t threads = 0);

}  // namespace stagenet
