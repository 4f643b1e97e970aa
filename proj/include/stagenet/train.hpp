#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include <json.hpp>

#include "stagenet/checkpoint.hpp"
#include "stagenet/data.hpp"
#include "stagenet/grad_check.hpp"
#include "stagenet/metrics.hpp"
#include "stagenet/model.hpp"

namespace stagenet {

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  // NaN when the validation labels make the metric undefined.
  double valid_auprc = 0.0;
  double valid_auroc = 0.0;
  double valid_min_rp = 0.0;
  double wall_seconds = 0.0;
};

nlohmann::json to_json(const EpochMetrics& m);

struct TrainOptions {
  /// Resume from this checkpoint: parameters, moments, step counter and
  /// normalisation statistics are taken from it.
  const Checkpoint* init = nullptr;
  /// Fit normalisation statistics on the training split and apply them to
  /// both splits.
  bool normalize = true;
  std::function<void(const EpochMetrics&)> on_epoch;
};

struct TrainResult {
  Checkpoint best;  // highest validation AUPRC
  Checkpoint last;
  std::size_t best_epoch = 0;
  std::vector<EpochMetrics> log;
};

/// Pooled per-visit scores and labels of `data` under `model` (eval mode).
ScoredSet score_dataset(StageNetModel& model, const Dataset& data);

/// Mini-batch Adam over shuffled batches; retains the epoch with the best
/// validation AUPRC. Throws TrainingError on a non-finite loss.
TrainResult train(const ModelConfig& config, const Dataset& train_set, const Dataset& valid_set,
                  const TrainOptions& options = {});

/// Rebuilds a model from a checkpoint.
std::unique_ptr<StageNetModel> load_model(const Checkpoint& ckpt);

/// Applies the checkpoint's normalisation statistics, if any.
Dataset prepare_for(const Checkpoint& ckpt, const Dataset& data);

/// Random model and patients for the full-model finite-difference check.
struct ModelCheckSetup {
  std::size_t patients = 2;
  std::size_t steps = 6;
  std::size_t n_features = 4;
  std::size_t hidden = 8;
  std::size_t chunk = 2;
  std::size_t window = 3;
  std::uint64_t seed = 42;
  ModelVariant variant = ModelVariant::kStageNet;
  // The widest allowed step: excite/squeeze gradients are ~1e-8, so roundoff in
  // the loss dominates a smaller step.
  GradCheckOptions options{1e-4, 1e-4};
};

/// Finite-difference check of the mean patient loss (eval mode) against
/// every model parameter.
GradCheckReport check_model_gradients(const ModelCheckSetup& setup);

}  // namespace stagenet
