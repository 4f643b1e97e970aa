#include "stagenet/checkpoint.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "stagenet/error.hpp"

namespace stagenet {

using json = nlohmann::json;

json config_to_json(const ModelConfig& c) {
  return json{{"n_features", c.n_features},
              {"hidden", c.hidden},
              {"chunk", c.chunk},
              {"window", c.window},
              {"bottleneck", c.bottleneck},
              {"dropout", c.dropout},
              {"dropconnect", c.dropconnect},
              {"delta_scale", c.delta_scale},
              {"learning_rate", c.learning_rate},
              {"beta1", c.beta1},
              {"beta2", c.beta2},
              {"adam_eps", c.adam_eps},
              {"grad_clip", c.grad_clip},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"max_len", c.max_len},
              {"seed", c.seed},
              {"label_clip", c.label_clip},
              {"variant", to_string(c.variant)}};
}

void merge_config(ModelConfig& c, const json& j) {
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  using Setter = std::function<void(const json&)>;
  auto size = [](std::size_t& f) { return Setter([&f](const json& v) { f = v.get<std::size_t>(); }); };
  auto real = [](double& f) { return Setter([&f](const json& v) { f = v.get<double>(); }); };
  const std::map<std::string, Setter> setters = {
      {"n_features", size(c.n_features)},
      {"hidden", size(c.hidden)},
      {"chunk", size(c.chunk)},
      {"window", size(c.window)},
      {"bottleneck", size(c.bottleneck)},
      {"dropout", real(c.dropout)},
      {"dropconnect", real(c.dropconnect)},
      {"delta_scale", real(c.delta_scale)},
      {"learning_rate", real(c.learning_rate)},
      {"beta1", real(c.beta1)},
      {"beta2", real(c.beta2)},
      {"adam_eps", real(c.adam_eps)},
      {"grad_clip", real(c.grad_clip)},
      {"epochs", size(c.epochs)},
      {"batch_size", size(c.batch_size)},
      {"max_len", size(c.max_len)},
      {"seed", Setter([&c](const json& v) { c.seed = v.get<std::uint64_t>(); })},
      {"label_clip", real(c.label_clip)},
      {"variant", Setter([&c](const json& v) { c.variant = parse_variant(v.get<std::string>()); })},
  };
  for (const auto& [key, value] : j.items()) {
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("unknown model config field '" + key + "'");
    try {
      it->second(value);
    } catch (const json::exception& e) {
      throw ConfigError("model config field '" + key + "': " + e.what());
    }
  }
}

Checkpoint capture(StageNetModel& model, std::uint64_t step, std::optional<NormStats> norm) {
  Checkpoint ckpt;
  ckpt.config = model.config();
  ckpt.norm = std::move(norm);
  ckpt.step = step;
  for (const Param* p : model.parameters()) {
    ckpt.params.push_back(NamedArray{p->name, p->shape, p->data, p->adam_m, p->adam_v});
  }
  return ckpt;
}

void restore(StageNetModel& model, const Checkpoint& ckpt) {
  std::map<std::string, const NamedArray*> by_name;
  for (const NamedArray& a : ckpt.params) by_name[a.name] = &a;
  for (Param* p : model.parameters()) {
    const auto it = by_name.find(p->name);
    if (it == by_name.end()) throw CheckpointError("checkpoint lacks parameter '" + p->name + "'");
    const NamedArray& a = *it->second;
    if (a.shape != p->shape) {
      throw CheckpointError("parameter '" + p->name + "' has shape " + to_string(a.shape) +
                            " in checkpoint but " + to_string(p->shape) + " in model");
    }
    p->data = a.data;
    p->adam_m = a.adam_m;
    p->adam_v = a.adam_v;
    p->zero_grad();
  }
  if (by_name.size() != model.parameters().size()) {
    throw CheckpointError("checkpoint holds parameters the model does not have");
  }
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  json params = json::object();
  for (const NamedArray& a : ckpt.params) {
    params[a.name] = json{{"shape", {a.shape.rows, a.shape.cols}},
                          {"data", a.data},
                          {"adam_m", a.adam_m},
                          {"adam_v", a.adam_v}};
  }
  json j{{"format_version", ckpt.format_version},
         {"config", config_to_json(ckpt.config)},
         {"step", ckpt.step},
         {"parameters", std::move(params)}};
  if (ckpt.norm) j["norm_stats"] = json{{"mean", ckpt.norm->mean}, {"std", ckpt.norm->std}};
  return j.dump(1) + "\n";
}

Checkpoint parse_checkpoint(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  Checkpoint ckpt;
  try {
    ckpt.format_version = j.at("format_version").get<int>();
    if (ckpt.format_version != kCheckpointFormatVersion) {
      throw CheckpointError("checkpoint format_version " + std::to_string(ckpt.format_version) +
                            " is not supported (expected " +
                            std::to_string(kCheckpointFormatVersion) + ")");
    }
    merge_config(ckpt.config, j.at("config"));
    ckpt.step = j.at("step").get<std::uint64_t>();
    if (j.contains("norm_stats")) {
      NormStats ns;
      ns.mean = j["norm_stats"].at("mean").get<std::vector<double>>();
      ns.std = j["norm_stats"].at("std").get<std::vector<double>>();
      ckpt.norm = std::move(ns);
    }
    for (const auto& [name, value] : j.at("parameters").items()) {
      NamedArray a;
      a.name = name;
      const auto shape = value.at("shape").get<std::vector<std::size_t>>();
      if (shape.size() != 2) throw CheckpointError("parameter '" + name + "' shape must have 2 dims");
      a.shape = Shape{shape[0], shape[1]};
      a.data = value.at("data").get<std::vector<double>>();
      a.adam_m = value.at("adam_m").get<std::vector<double>>();
      a.adam_v = value.at("adam_v").get<std::vector<double>>();
      if (a.data.size() != a.shape.size() || a.adam_m.size() != a.shape.size() ||
          a.adam_v.size() != a.shape.size()) {
        throw CheckpointError("parameter '" + name + "' holds a different number of values than shape " +
                              to_string(a.shape));
      }
      ckpt.params.push_back(std::move(a));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint is malformed: ") + e.what());
  }
  // Shapes must agree with what the stored config builds.
  StageNetModel probe(ckpt.config);
  restore(probe, ckpt);
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write checkpoint '" + path.string() + "'");
  out << serialize_checkpoint(ckpt);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_checkpoint(ss.str());
}

}  // namespace stagenet
