#include "stagenet/cli.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "stagenet/checkpoint.hpp"
#include "stagenet/error.hpp"
#include "stagenet/generator.hpp"
#include "stagenet/metrics.hpp"
#include "stagenet/subtype.hpp"
#include "stagenet/train.hpp"

namespace stagenet::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  out << text;
}

/// --seed, else STAGENET_SEED, else nothing.
std::optional<std::uint64_t> resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return flag;
  const char* env = std::getenv("STAGENET_SEED");
  if (env == nullptr || *env == '\0') return std::nullopt;
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(env, &used);
    if (used != std::string(env).size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(std::string("STAGENET_SEED='") + env + "' is not an unsigned integer");
  }
}

template <class T>
void override_with(T& field, const std::optional<T>& flag) {
  if (flag) field = *flag;
}


// ---------------------------------------------------------------- generate

struct GenerateArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> n_patients, n_features, n_archetypes;
  std::optional<double> jump_magnitude, missing_rate;
};

void add_generate(CLI::App& app, GenerateArgs& a) {
  auto* cmd = app.add_subcommand("generate", "Write a synthetic cohort as JSON lines");
  cmd->add_option("--config", a.config, "Generator config JSON");
  cmd->add_option("--out", a.out, "Output JSONL path")->required();
  cmd->add_option("--seed", a.seed);
  cmd->add_option("--n-patients", a.n_patients);
  cmd->add_option("--n-features", a.n_features);
  cmd->add_option("--archetypes", a.n_archetypes);
  cmd->add_option("--jump-magnitude", a.jump_magnitude);
  cmd->add_option("--missing-rate", a.missing_rate);
}

int cmd_generate(const GenerateArgs& a) {
  GeneratorConfig config;
  if (!a.config.empty()) merge_generator_config(config, read_json_file(a.config));
  override_with(config.seed, resolve_seed(a.seed));
  override_with(config.n_patients, a.n_patients);
  override_with(config.n_features, a.n_features);
  override_with(config.n_archetypes, a.n_archetypes);
  override_with(config.jump_magnitude, a.jump_magnitude);
  override_with(config.missing_rate, a.missing_rate);
  validate(config);
  const Dataset data = generate_synthetic(config);
  save_dataset(data, a.out);
  write_text(a.out + ".config.json", generator_config_to_json(config).dump(2) + "\n");
  std::cout << "generated " << data.size() << " patients -> " << a.out << "\n";
  return kOk;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string train, valid, out, config, init;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> hidden, chunk, window, bottleneck, epochs, batch_size, max_len;
  std::optional<double> dropout, dropconnect, learning_rate, grad_clip, delta_scale;
  std::optional<std::string> variant;
};

void add_train(CLI::App& app, TrainArgs& a) {
  auto* cmd = app.add_subcommand("train", "Train a model and keep the best validation epoch");
  cmd->add_option("--train", a.train, "Training JSONL")->required();
  cmd->add_option("--valid", a.valid, "Validation JSONL")->required();
  cmd->add_option("--out", a.out, "Output directory")->required();
  cmd->add_option("--config", a.config, "Model config JSON");
  cmd->add_option("--init-checkpoint", a.init, "Resume from this checkpoint");
  cmd->add_option("--seed", a.seed);
  cmd->add_option("--hidden", a.hidden);
  cmd->add_option("--chunk", a.chunk);
  cmd->add_option("--window", a.window);
  cmd->add_option("--bottleneck", a.bottleneck);
  cmd->add_option("--epochs", a.epochs);
  cmd->add_option("--batch-size", a.batch_size);
  cmd->add_option("--max-len", a.max_len);
  cmd->add_option("--dropout", a.dropout);
  cmd->add_option("--dropconnect", a.dropconnect);
  cmd->add_option("--lr", a.learning_rate);
  cmd->add_option("--grad-clip", a.grad_clip);
  cmd->add_option("--delta-scale", a.delta_scale);
  cmd->add_option("--variant", a.variant, "stagenet or lstm");
}

int cmd_train(const TrainArgs& a) {
  std::optional<Checkpoint> init;
  if (!a.init.empty()) init = load_checkpoint(a.init);
  ModelConfig config = init ? init->config : ModelConfig{};
  if (!a.config.empty()) merge_config(config, read_json_file(a.config));
  override_with(config.seed, resolve_seed(a.seed));
  override_with(config.hidden, a.hidden);
  override_with(config.chunk, a.chunk);
  override_with(config.window, a.window);
  override_with(config.bottleneck, a.bottleneck);
  override_with(config.epochs, a.epochs);
  override_with(config.batch_size, a.batch_size);
  override_with(config.max_len, a.max_len);
  override_with(config.dropout, a.dropout);
  override_with(config.dropconnect, a.dropconnect);
  override_with(config.learning_rate, a.learning_rate);
  override_with(config.grad_clip, a.grad_clip);
  override_with(config.delta_scale, a.delta_scale);
  if (a.variant) config.variant = parse_variant(*a.variant);

  const Dataset train_set = load_dataset(a.train);
  const Dataset valid_set = load_dataset(a.valid);
  if (train_set.empty()) throw InputError("training file '" + a.train + "' holds no patients");
  if (config.n_features == 0) config.n_features = train_set.front().n_features();
  config.validate();

  const fs::path dir(a.out);
  fs::create_directories(dir);
  write_text(dir / "config.json", config_to_json(config).dump(2) + "\n");
  std::ofstream log(dir / "metrics.jsonl", std::ios::binary | std::ios::trunc);
  if (!log) throw InputError("cannot write '" + (dir / "metrics.jsonl").string() + "'");

  TrainOptions options;
  options.init = init ? &*init : nullptr;
  options.on_epoch = [&](const EpochMetrics& m) {
    log << to_json(m).dump() << "\n";
    log.flush();
    char line[160];
    std::snprintf(line, sizeof line, "epoch %zu/%zu  loss %.4f  valid auprc %.4f  auroc %.4f  (%.1fs)",
                  m.epoch, config.epochs, m.train_loss, m.valid_auprc, m.valid_auroc,
                  m.wall_seconds);
    std::cout << line << std::endl;
  };
  const TrainResult result = train(config, train_set, valid_set, options);
  save_checkpoint(result.best, dir / "checkpoint.json");
  const EpochMetrics& best = result.log[result.best_epoch - 1];
  std::cout << "best epoch " << result.best_epoch << " (valid auprc " << best.valid_auprc
            << ", step " << result.best.step << ") -> " << (dir / "checkpoint.json").string()
            << "\n";
  return kOk;
}

// ---------------------------------------------------------------- predict

struct PredictArgs {
  std::string checkpoint, data, out;
};

void add_predict(CLI::App& app, PredictArgs& a) {
  auto* cmd = app.add_subcommand("predict", "Write per-visit risk, stage variation and u~");
  cmd->add_option("--checkpoint", a.checkpoint)->required();
  cmd->add_option("--data", a.data)->required();
  cmd->add_option("--out", a.out, "Output JSONL path")->required();
}

int cmd_predict(const PredictArgs& a) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const Dataset data = prepare_for(ckpt, load_dataset(a.data));
  auto model = load_model(ckpt);
  const auto traces = predict_all(*model, data);
  std::ostringstream out;
  std::size_t rows = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (const PredictionStep& step : traces[i].steps) {
      ordered_json row;
      row["patient_id"] = data[i].patient_id;
      row["t"] = step.t;
      row["y_hat"] = step.y_hat;
      row["s"] = step.s;
      row["u_tilde"] = step.u_tilde;
      out << row.dump() << "\n";
      ++rows;
    }
  }
  write_text(a.out, out.str());
  std::cout << "wrote " << rows << " predictions for " << data.size() << " patients -> " << a.out
            << "\n";
  return kOk;
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
  std::string predictions, data, out;
  std::size_t bootstrap = 1000;
  std::optional<std::uint64_t> seed;
};

void add_evaluate(CLI::App& app, EvaluateArgs& a) {
  auto* cmd = app.add_subcommand("evaluate", "Score a predictions file against labels");
  cmd->add_option("--predictions", a.predictions)->required();
  cmd->add_option("--data", a.data, "Dataset holding the labels")->required();
  cmd->add_option("--out", a.out, "Report JSON path")->required();
  cmd->add_option("--bootstrap", a.bootstrap, "Resamples; 0 disables")->capture_default_str();
  cmd->add_option("--seed", a.seed);
}

ordered_json metric_or_null(const ScoredSet& s, double (*metric)(const ScoredSet&)) {
  try {
    return metric(s);
  } catch (const MetricError&) {
    return nullptr;
  }
}

ordered_json band_json(const BandSummary& b) {
  if (!b.present()) return ordered_json{{"count", 0}, {"mean_s", nullptr}, {"std_s", nullptr}};
  return ordered_json{{"count", b.count}, {"mean_s", b.mean_s}, {"std_s", b.std_s}};
}

int cmd_evaluate(const EvaluateArgs& a) {
  const Dataset data = load_dataset(a.data);
  std::map<std::string, const PatientSequence*> by_id;
  for (const PatientSequence& seq : data) by_id[seq.patient_id] = &seq;

  std::ifstream in(a.predictions);
  if (!in) throw InputError("cannot open predictions '" + a.predictions + "'");
  ScoredSet scored;
  std::vector<double> stage;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.empty()) continue;
    const std::string where = a.predictions + ":" + std::to_string(n);
    json row;
    try {
      row = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(where + ": " + e.what());
    }
    std::string id;
    std::size_t t = 0;
    double y = 0.0, s = 0.0;
    try {
      id = row.at("patient_id").get<std::string>();
      t = row.at("t").get<std::size_t>();
      y = row.at("y_hat").get<double>();
      s = row.at("s").get<double>();
    } catch (const json::exception& e) {
      throw ParseError(where + ": " + e.what());
    }
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw InputError(where + ": unknown patient '" + id + "'");
    if (t >= it->second->length()) {
      throw InputError(where + ": t = " + std::to_string(t) + " is past the end of patient '" + id +
                       "'");
    }
    scored.scores.push_back(y);
    scored.labels.push_back(it->second->labels[t]);
    stage.push_back(s);
  }
  if (scored.scores.empty()) throw InputError("predictions '" + a.predictions + "' are empty");

  ordered_json report;
  report["n_visits"] = scored.scores.size();
  report["n_positive"] = scored.positives();
  report["auroc"] = metric_or_null(scored, &auroc);
  report["auprc"] = metric_or_null(scored, &auprc);
  report["min_re_p"] = metric_or_null(scored, &min_re_p);
  if (a.bootstrap > 0) {
    const std::uint64_t seed = resolve_seed(a.seed).value_or(0);
    ordered_json boot;
    boot["n_resamples"] = a.bootstrap;
    boot["seed"] = seed;
    const std::pair<const char*, double (*)(const ScoredSet&)> metrics[] = {
        {"auroc", &auroc}, {"auprc", &auprc}, {"min_re_p", &min_re_p}};
    for (const auto& [name, fn] : metrics) {
      try {
        const BootstrapResult r = bootstrap(scored, fn, a.bootstrap, seed);
        boot[name] = ordered_json{{"mean", r.mean}, {"std", r.std}, {"used", r.used},
                                  {"skipped", r.skipped}};
      } catch (const MetricError&) {
        boot[name] = nullptr;
      }
    }
    report["bootstrap"] = std::move(boot);
  }
  const RiskBandTable bands = risk_band_stage_table(scored.scores, stage);
  report["risk_bands"] = ordered_json{{"low", band_json(bands.low)},
                                      {"medium", band_json(bands.medium)},
                                      {"high", band_json(bands.high)}};
  write_text(a.out, report.dump(2) + "\n");
  std::cout << "auroc " << report["auroc"].dump() << "  auprc " << report["auprc"].dump()
            << "  min(Re,P+) " << report["min_re_p"].dump() << " -> " << a.out << "\n";
  return kOk;
}

// ---------------------------------------------------------------- subtype

struct SubtypeArgs {
  std::string checkpoint, data, out;
  std::size_t k = 4;
  std::optional<std::uint64_t> seed;
};

void add_subtype(CLI::App& app, SubtypeArgs& a) {
  auto* cmd = app.add_subcommand("subtype", "Cluster patients by their last-step representation");
  cmd->add_option("--checkpoint", a.checkpoint)->required();
  cmd->add_option("--data", a.data)->required();
  cmd->add_option("--out", a.out, "Cluster JSON path")->required();
  cmd->add_option("--k", a.k)->capture_default_str();
  cmd->add_option("--seed", a.seed);
}

int cmd_subtype(const SubtypeArgs& a) {
  if (a.k < 2) throw ConfigError("subtype: k must be >= 2, got " + std::to_string(a.k));
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const Dataset data = prepare_for(ckpt, load_dataset(a.data));
  auto model = load_model(ckpt);
  const std::uint64_t seed = resolve_seed(a.seed).value_or(0);
  const SubtypeResult r = subtype(*model, data, a.k, seed);

  ordered_json report;
  report["k"] = a.k;
  report["seed"] = seed;
  report["representation"] = ckpt.config.variant == ModelVariant::kStageNet ? "u_tilde" : "h";
  report["ch_score"] = r.clusters.ch_infinite ? ordered_json(nullptr) : ordered_json(r.clusters.ch_score);
  report["ch_infinite"] = r.clusters.ch_infinite;
  report["wcss"] = r.clusters.wcss;
  ordered_json clusters = ordered_json::array();
  for (std::size_t c = 0; c < a.k; ++c) {
    clusters.push_back(ordered_json{{"cluster", c},
                                    {"size", r.cluster_sizes[c]},
                                    {"label_rate", r.label_rate[c]},
                                    {"mean_risk", r.mean_risk[c]}});
  }
  report["clusters"] = std::move(clusters);
  ordered_json assignments = ordered_json::object();
  for (std::size_t i = 0; i < r.patient_ids.size(); ++i) {
    assignments[r.patient_ids[i]] = r.clusters.assignments[i];
  }
  report["assignments"] = std::move(assignments);
  write_text(a.out, report.dump(2) + "\n");
  std::cout << "k " << a.k << "  calinski-harabasz " << report["ch_score"].dump() << " -> " << a.out
            << "\n";
  return kOk;
}

// ---------------------------------------------------------------- gradcheck

struct GradcheckArgs {
  std::string dims = "2,6,4,8,2,3";
  std::optional<std::uint64_t> seed;
  double tol = 1e-4;
  double eps = 1e-4;
  std::string variant = "stagenet";
  std::string out;
};

void add_gradcheck(CLI::App& app, GradcheckArgs& a) {
  auto* cmd = app.add_subcommand("gradcheck", "Finite-difference check of the full model");
  cmd->add_option("--dims", a.dims, "patients,steps,features,hidden,chunk,window")
      ->capture_default_str();
  cmd->add_option("--seed", a.seed);
  cmd->add_option("--tol", a.tol, "Maximum relative error")->capture_default_str();
  cmd->add_option("--eps", a.eps, "Central-difference step")->capture_default_str();
  cmd->add_option("--variant", a.variant)->capture_default_str();
  cmd->add_option("--out", a.out, "Report JSON path");
}

std::vector<std::size_t> parse_dims(const std::string& text) {
  std::vector<std::size_t> dims;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(part, &used);
      if (used != part.size() || v < 0) throw std::invalid_argument(part);
      dims.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw ConfigError("--dims: '" + part + "' is not a nonnegative integer");
    }
  }
  if (dims.size() != 6) {
    throw ConfigError("--dims needs 6 values (patients,steps,features,hidden,chunk,window), got '" +
                      text + "'");
  }
  return dims;
}

int cmd_gradcheck(const GradcheckArgs& a) {
  const auto d = parse_dims(a.dims);
  ModelCheckSetup setup;
  setup.patients = d[0];
  setup.steps = d[1];
  setup.n_features = d[2];
  setup.hidden = d[3];
  setup.chunk = d[4];
  setup.window = d[5];
  setup.seed = resolve_seed(a.seed).value_or(setup.seed);
  setup.variant = parse_variant(a.variant);
  setup.options = GradCheckOptions{a.eps, a.tol};
  const GradCheckReport r = check_model_gradients(setup);

  if (!a.out.empty()) {
    ordered_json report;
    report["dims"] = a.dims;
    report["seed"] = setup.seed;
    report["eps"] = a.eps;
    report["tol"] = a.tol;
    report["max_rel_error"] = r.max_rel_error;
    report["max_abs_error"] = r.max_abs_error;
    report["pass"] = r.pass;
    ordered_json params = ordered_json::array();
    for (const ParamGradError& p : r.params) {
      params.push_back(ordered_json{{"name", p.name},
                                    {"max_rel_error", p.max_rel_error},
                                    {"max_abs_error", p.max_abs_error},
                                    {"worst_index", p.worst_index}});
    }
    report["params"] = std::move(params);
    write_text(a.out, report.dump(2) + "\n");
  }
  std::cout << "gradcheck " << (r.pass ? "pass" : "FAIL") << "  max rel err " << r.max_rel_error
            << "  (tol " << a.tol << ", " << r.params.size() << " tensors)\n";
  return r.pass ? kOk : kNumericError;
}

int exit_code_for(const Error& e) {
  if (dynamic_cast<const ConfigError*>(&e) != nullptr) return kConfigError;
  if (dynamic_cast<const InputError*>(&e) != nullptr || dynamic_cast<const LoadError*>(&e) != nullptr ||
      dynamic_cast<const ParseError*>(&e) != nullptr ||
      dynamic_cast<const CheckpointError*>(&e) != nullptr ||
      dynamic_cast<const MetricError*>(&e) != nullptr) {
    return kDataError;
  }
  return kNumericError;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"StageNet: stage-aware risk prediction on visit sequences"};
  app.name("stagenet");
  app.require_subcommand(1);
  GenerateArgs generate;
  TrainArgs train_args;
  PredictArgs predict;
  EvaluateArgs evaluate;
  SubtypeArgs subtype_args;
  GradcheckArgs gradcheck;
  add_generate(app, generate);
  add_train(app, train_args);
  add_predict(app, predict);
  add_evaluate(app, evaluate);
  add_subtype(app, subtype_args);
  add_gradcheck(app, gradcheck);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    const std::string name = app.get_subcommands().front()->get_name();
    if (name == "generate") return cmd_generate(generate);
    if (name == "train") return cmd_train(train_args);
    if (name == "predict") return cmd_predict(predict);
    if (name == "evaluate") return cmd_evaluate(evaluate);
    if (name == "subtype") return cmd_subtype(subtype_args);
    return cmd_gradcheck(gradcheck);
  } catch (const Error& e) {
    std::cerr << "stagenet: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const fs::filesystem_error& e) {
    std::cerr << "stagenet: " << e.what() << "\n";
    return kDataError;
  }
}

int run(const std::vector<std::string>& args) {
  std::vector<char*> argv;
  std::vector<std::string> copy = args;
  for (std::string& s : copy) argv.push_back(s.data());
  argv.push_back(nullptr);
  return run(static_cast<int>(copy.size()), argv.data());
}

}  // namespace stagenet::cli
