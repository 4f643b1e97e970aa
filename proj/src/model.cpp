#include "stagenet/model.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "stagenet/error.hpp"

namespace stagenet {

std::string to_string(ModelVariant v) {
  return v == ModelVariant::kStageNet ? "stagenet" : "lstm";
}

ModelVariant parse_variant(const std::string& s) {
  if (s == "stagenet") return ModelVariant::kStageNet;
  if (s == "lstm") return ModelVariant::kLstm;
  throw ConfigError("unknown model variant '" + s + "' (expected stagenet or lstm)");
}

std::size_t ModelConfig::resolved_bottleneck() const {
  return bottleneck != 0 ? bottleneck : std::max<std::size_t>(hidden / 2, 1);
}

std::size_t ModelConfig::resolved_batch_size(std::size_t n_patients) const {
  if (batch_size != 0) return batch_size;
  return n_patients < 1000 ? 16 : 64;
}

void ModelConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  require(n_features >= 1, "n_features must be >= 1");
  require(hidden >= 2, "hidden size must be >= 2");
  require(chunk >= 1, "chunk size must be >= 1");
  require(hidden % chunk == 0, "hidden size " + std::to_string(hidden) +
                                   " is not divisible by chunk size " + std::to_string(chunk));
  if (variant == ModelVariant::kStageNet) {
    require(levels() >= 2, "hidden / chunk = " + std::to_string(levels()) +
                               " master-gate levels; at least 2 are required");
  }
  require(window >= 1, "observation window must be >= 1");
  require(resolved_bottleneck() < hidden, "bottleneck must be smaller than hidden size");
  require(dropout >= 0.0 && dropout < 1.0, "dropout must lie in [0, 1)");
  require(dropconnect >= 0.0 && dropconnect < 1.0, "dropconnect must lie in [0, 1)");
  require(delta_scale > 0.0, "delta_scale must be > 0");
  require(learning_rate > 0.0, "learning_rate must be > 0");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0,
          "adam betas must lie in [0, 1)");
  require(adam_eps > 0.0, "adam eps must be > 0");
  require(grad_clip >= 0.0, "grad_clip must be >= 0");
  require(max_len >= 1, "max_len must be >= 1");
  require(label_clip > 0.0 && label_clip < 0.5, "label_clip must lie in (0, 0.5)");
}

namespace {

const ModelConfig& checked(const ModelConfig& c) {
  c.validate();
  return c;
}

StageCellDims cell_dims(const ModelConfig& c) {
  return StageCellDims{c.n_features, c.hidden, c.chunk, c.variant == ModelVariant::kStageNet};
}

}  // namespace

StageNetModel::StageNetModel(const ModelConfig& config)
    : config_(checked(config)),
      cell_(cell_dims(config)),
      conv_(config.hidden, config.window, config.resolved_bottleneck()),
      w_y_("output.w", {1, config.hidden}),
      b_y_("output.b", {1, 1}) {}

void StageNetModel::initialize(Rng& rng) {
  cell_.initialize(rng);
  conv_.initialize(rng);
  const double bound = 1.0 / std::sqrt(static_cast<double>(config_.hidden));
  for (double& v : w_y_.data) v = uniform(rng, -bound, bound);
  b_y_.data[0] = 0.0;
}

std::vector<Param*> StageNetModel::parameters() {
  std::vector<Param*> out = cell_.parameters();
  if (config_.variant == ModelVariant::kStageNet) {
    for (Param* p : conv_.parameters()) out.push_back(p);
  }
  out.push_back(&w_y_);
  out.push_back(&b_y_);
  return out;
}

void StageNetModel::zero_grad() {
  for (Param* p : parameters()) p->zero_grad();
}

ForwardGraph build_forward(Graph& g, StageNetModel& model, const PatientSequence& seq,
                           Mode mode, const TrainNoise& noise) {
  const ModelConfig& cfg = model.config();
  if (seq.length() == 0) throw InputError("forward: patient '" + seq.patient_id + "' is empty");
  if (seq.n_features() != cfg.n_features) {
    throw InputError("forward: patient '" + seq.patient_id + "' has " +
                     std::to_string(seq.n_features()) + " features, model expects " +
                     std::to_string(cfg.n_features));
  }
  const bool train = mode == Mode::kTrain;
  const bool use_dropout = train && cfg.dropout > 0.0;
  if (use_dropout && noise.rng == nullptr) {
    throw InputError("forward: train mode with dropout needs an rng");
  }
  const bool stagenet = cfg.variant == ModelVariant::kStageNet;

  const BoundStageCell cell = bind(g, model.cell(), train ? noise.dropconnect : nullptr);
  Var kernels, squeeze, excite;
  if (stagenet) {
    kernels = g.param(model.conv().kernels);
    squeeze = g.param(model.conv().squeeze);
    excite = g.param(model.conv().excite);
  }
  const Var w_y = g.param(model.output_weight());
  const Var b_y = g.param(model.output_bias());

  Var h = g.zeros({cfg.hidden, 1});
  Var c = g.zeros({cfg.hidden, 1});
  StageWindow window(g, cfg.window, cfg.hidden);
  const double keep_scale = use_dropout ? 1.0 / (1.0 - cfg.dropout) : 1.0;

  ForwardGraph out;
  for (std::size_t t = 0; t < seq.length(); ++t) {
    if (!seq.mask.empty() && seq.mask[t] == 0) continue;
    const Var v = g.constant({cfg.n_features, 1}, seq.visits[t]);
    const CellStep step = cell_step(cell, v, seq.deltas[t] / cfg.delta_scale, h, c);
    h = step.h;
    c = step.c;

    PredictionStep rec;
    rec.t = t;
    Var representation = h;
    if (stagenet) {
      window.push(h, step.variation.s_norm);
      const Var states = window.states();
      const Var weights = stage_weights(window.variations());
      const Var u = stage_conv(states, weights, kernels);
      const Var theme = progression_theme(states, weights);
      const Recalibration rc = recalibrate(u, theme, excite, squeeze);
      representation = add(rc.u_tilde, h);
      const auto ut = rc.u_tilde.value();
      rec.u_tilde.assign(ut.begin(), ut.end());
    }
    if (use_dropout) {
      std::vector<double> mask(cfg.hidden);
      for (double& m : mask) m = bernoulli(*noise.rng, cfg.dropout) ? 0.0 : keep_scale;
      representation = mul(representation, g.constant({cfg.hidden, 1}, std::move(mask)));
    }
    const Var y = sigmoid(add(matmul(w_y, representation), b_y));

    rec.y_hat = y.item();
    rec.s = step.variation.s.item();
    rec.s_norm = step.variation.s_norm.item();
    const auto hv = h.value();
    rec.h.assign(hv.begin(), hv.end());
    out.y_hat.push_back(y);
    out.labels.push_back(seq.labels[t]);
    out.trace.steps.push_back(std::move(rec));
  }
  return out;
}

PredictionTrace forward(StageNetModel& model, const PatientSequence& seq) {
  Graph g;
  return build_forward(g, model, seq, Mode::kEval).trace;
}

PredictionTrace forward(StageNetModel& model, const PatientSequence& seq, Mode mode,
                        const TrainNoise& noise) {
  Graph g;
  return build_forward(g, model, seq, mode, noise).trace;
}

Var sequence_loss(std::span<const Var> y_hat, std::span<const int> labels, double clip) {
  if (y_hat.empty()) throw InputError("loss: no valid timesteps");
  if (y_hat.size() != labels.size()) throw DimensionError("loss: predictions and labels differ");
  Graph& g = y_hat.front().graph();
  std::vector<Var> terms;
  terms.reserve(y_hat.size());
  for (std::size_t t = 0; t < y_hat.size(); ++t) {
    const Var p = clamp(y_hat[t], clip, 1.0 - clip);
    // Only the log of the observed outcome enters; the other term has weight 0.
    terms.push_back(labels[t] == 1 ? log(p) : log(sub(g.constant_scalar(1.0), p)));
  }
  return scale(add_n(terms), -1.0 / static_cast<double>(y_hat.size()));
}

double sequence_loss(std::span<const double> y_hat, std::span<const int> labels,
                     std::span<const std::uint8_t> mask, double clip) {
  if (y_hat.size() != labels.size() || y_hat.size() != mask.size()) {
    throw DimensionError("loss: predictions, labels and mask differ in length");
  }
  double total = 0.0;
  std::size_t valid = 0;
  for (std::size_t t = 0; t < y_hat.size(); ++t) {
    if (mask[t] == 0) continue;
    const double p = std::clamp(y_hat[t], clip, 1.0 - clip);
    total += labels[t] == 1 ? std::log(p) : std::log(1.0 - p);
    ++valid;
  }
  if (valid == 0) throw InputError("loss: no valid timesteps");
  return -total / static_cast<double>(valid);
}

double dataset_loss(StageNetModel& model, const Dataset& data) {
  if (data.empty()) throw InputError("dataset_loss: empty dataset");
  double total = 0.0;
  for (const PatientSequence& seq : data) {
    Graph g;
    const ForwardGraph fg = build_forward(g, model, seq, Mode::kEval);
    total += sequence_loss(fg.y_hat, fg.labels, model.config().label_clip).item();
  }
  return total / static_cast<double>(data.size());
}

std::vector<PredictionTrace> predict_all(StageNetModel& model, const Dataset& data,
                                         std::size_t threads) {
  std::vector<PredictionTrace> out(data.size());
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, std::max<std::size_t>(data.size(), 1));
  if (threads <= 1) {
    for (std::size_t i = 0; i < data.size(); ++i) out[i] = forward(model, data[i]);
    return out;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> workers;
  for (std::size_t w = 0; w < threads; ++w) {
    workers.emplace_back([&, w]() {
      try {
        for (std::size_t i = w; i < data.size(); i += threads) out[i] = forward(model, data[i]);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : workers) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

}  // namespace stagenet
