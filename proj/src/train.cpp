#include "stagenet/train.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "stagenet/error.hpp"
#include "stagenet/optimizer.hpp"
#include "stagenet/rng.hpp"

namespace stagenet {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

nlohmann::json finite_or_null(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

double metric_or_nan(const ScoredSet& s, double (*metric)(const ScoredSet&)) {
  try {
    return metric(s);
  } catch (const MetricError&) {
    return kNaN;
  }
}

}  // namespace

nlohmann::json to_json(const EpochMetrics& m) {
  return nlohmann::json{{"epoch", m.epoch},
                        {"train_loss", finite_or_null(m.train_loss)},
                        {"valid_auprc", finite_or_null(m.valid_auprc)},
                        {"valid_auroc", finite_or_null(m.valid_auroc)},
                        {"valid_min_rp", finite_or_null(m.valid_min_rp)},
                        {"wall_time", m.wall_seconds}};
}

ScoredSet score_dataset(StageNetModel& model, const Dataset& data) {
  ScoredSet s;
  const auto traces = predict_all(model, data);
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (const PredictionStep& step : traces[i].steps) {
      s.scores.push_back(step.y_hat);
      s.labels.push_back(data[i].labels[step.t]);
    }
  }
  return s;
}

std::unique_ptr<StageNetModel> load_model(const Checkpoint& ckpt) {
  auto model = std::make_unique<StageNetModel>(ckpt.config);
  restore(*model, ckpt);
  return model;
}

Dataset prepare_for(const Checkpoint& ckpt, const Dataset& data) {
  return ckpt.norm ? forward_fill_and_normalize(data, *ckpt.norm) : data;
}

TrainResult train(const ModelConfig& config_in, const Dataset& train_set,
                  const Dataset& valid_set, const TrainOptions& options) {
  if (train_set.empty()) throw InputError("train: empty training set");
  if (valid_set.empty()) throw InputError("train: empty validation set");
  ModelConfig config = config_in;
  if (config.n_features == 0) config.n_features = train_set.front().n_features();
  config.validate();
  if (options.init != nullptr && options.init->config.n_features != config.n_features) {
    throw ConfigError("train: initial checkpoint has " +
                      std::to_string(options.init->config.n_features) + " features, data has " +
                      std::to_string(config.n_features));
  }

  std::optional<NormStats> stats;
  if (options.init != nullptr && options.init->norm) {
    stats = options.init->norm;
  } else if (options.normalize) {
    stats = compute_norm_stats(train_set);
  }
  const Dataset train_data = stats ? forward_fill_and_normalize(train_set, *stats) : train_set;
  const Dataset valid_data = stats ? forward_fill_and_normalize(valid_set, *stats) : valid_set;

  StageNetModel model(config);
  {
    Rng init_rng(mix_seed(config.seed, 0));
    model.initialize(init_rng);
  }
  std::uint64_t start_step = 0;
  if (options.init != nullptr) {
    restore(model, *options.init);
    start_step = options.init->step;
  }
  Rng rng(mix_seed(config.seed, 1 + start_step));
  Adam adam(AdamConfig{config.learning_rate, config.beta1, config.beta2, config.adam_eps},
            start_step);
  const std::vector<Param*> params = model.parameters();
  const std::size_t batch_size = config.resolved_batch_size(train_data.size());

  TrainResult result;
  double best_auprc = -std::numeric_limits<double>::infinity();
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    std::vector<std::size_t> order(train_data.size());
    std::iota(order.begin(), order.end(), 0);
    shuffle(order.begin(), order.end(), rng);
    Dataset shuffled;
    shuffled.reserve(order.size());
    for (std::size_t i : order) shuffled.push_back(train_data[i]);
    const auto batches = make_batches(shuffled, batch_size, config.max_len);

    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const Batch& batch = batches[b];
      const auto where = "epoch " + std::to_string(epoch) + ", batch " + std::to_string(b);
      model.zero_grad();
      std::optional<DropconnectMasks> masks;
      if (config.dropconnect > 0.0) {
        masks = DropconnectMasks::sample(model.cell(), config.dropconnect, rng);
      }
      const TrainNoise noise{masks ? &*masks : nullptr, &rng};
      const double weight = 1.0 / static_cast<double>(batch.sequences.size());
      double batch_loss = 0.0;
      for (const PatientSequence& seq : batch.sequences) {
        Graph g;
        const ForwardGraph fg = build_forward(g, model, seq, Mode::kTrain, noise);
        const Var loss = sequence_loss(fg.y_hat, fg.labels, config.label_clip);
        if (!std::isfinite(loss.item())) throw TrainingError("non-finite loss at " + where);
        g.backward(loss, weight);
        batch_loss += weight * loss.item();
      }
      try {
        clip_grad_norm(params, config.grad_clip);
        adam.step(params);
      } catch (const TrainingError& e) {
        throw TrainingError(std::string(e.what()) + " at " + where);
      }
      epoch_loss += batch_loss;
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = epoch_loss / static_cast<double>(batches.size());
    const ScoredSet valid_scores = score_dataset(model, valid_data);
    m.valid_auprc = metric_or_nan(valid_scores, &auprc);
    m.valid_auroc = metric_or_nan(valid_scores, &auroc);
    m.valid_min_rp = metric_or_nan(valid_scores, &min_re_p);
    m.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.log.push_back(m);
    if (options.on_epoch) options.on_epoch(m);

    const double score = std::isnan(m.valid_auprc) ? -1.0 : m.valid_auprc;
    if (result.best_epoch == 0 || score > best_auprc) {
      best_auprc = score;
      result.best_epoch = epoch;
      result.best = capture(model, adam.steps(), stats);
    }
  }
  result.last = capture(model, adam.steps(), stats);
  if (result.best_epoch == 0) result.best = result.last;
  return result;
}

GradCheckReport check_model_gradients(const ModelCheckSetup& setup) {
  ModelConfig config;
  config.n_features = setup.n_features;
  config.hidden = setup.hidden;
  config.chunk = setup.chunk;
  config.window = setup.window;
  config.seed = setup.seed;
  config.variant = setup.variant;
  config.dropout = 0.0;
  config.dropconnect = 0.0;
  config.validate();
  if (setup.patients == 0 || setup.steps == 0) {
    throw ConfigError("gradient check needs at least one patient and one step");
  }

  StageNetModel model(config);
  Rng rng(mix_seed(setup.seed, 0));
  model.initialize(rng);
  // Nonzero biases so that no gate sits exactly at its symmetric point.
  for (Param* p : model.parameters()) {
    if (p->name.ends_with(".b")) {
      for (double& v : p->data) v = uniform(rng, -0.5, 0.5);
    }
  }

  Dataset data;
  for (std::size_t p = 0; p < setup.patients; ++p) {
    PatientSequence seq;
    seq.patient_id = "G" + std::to_string(p);
    for (std::size_t t = 0; t < setup.steps; ++t) {
      std::vector<double> v(setup.n_features);
      for (double& x : v) x = normal(rng);
      seq.visits.push_back(std::move(v));
      seq.deltas.push_back(t == 0 ? 0.0 : uniform(rng, 0.5, 2.0));
      seq.labels.push_back(static_cast<int>((t + p) % 2));
    }
    seq.mask.assign(setup.steps, 1);
    data.push_back(std::move(seq));
  }

  const Objective objective = [&](Graph& g) {
    std::vector<Var> losses;
    for (const PatientSequence& seq : data) {
      const ForwardGraph fg = build_forward(g, model, seq, Mode::kEval);
      losses.push_back(sequence_loss(fg.y_hat, fg.labels, config.label_clip));
    }
    return scale(add_n(losses), 1.0 / static_cast<double>(losses.size()));
  };
  const std::vector<Param*> params = model.parameters();
  return grad_check(objective, params, setup.options);
}

}  // namespace stagenet
