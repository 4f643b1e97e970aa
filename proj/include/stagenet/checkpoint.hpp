#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "stagenet/autodiff.hpp"
#include "stagenet/data.hpp"
#include "stagenet/model.hpp"

namespace stagenet {

inline constexpr int kCheckpointFormatVersion = 1;

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<double> data;
  std::vector<double> adam_m;
  std::vector<double> adam_v;
};

struct Checkpoint {
  int format_version = kCheckpointFormatVersion;
  ModelConfig config;
  std::optional<NormStats> norm;
  std::uint64_t step = 0;
  std::vector<NamedArray> params;
};

nlohmann::json config_to_json(const ModelConfig& config);
/// Overwrites the fields present in `j`; unknown keys are a ConfigError.
void merge_config(ModelConfig& config, const nlohmann::json& j);

/// Snapshot of a model's parameters and optimiser moments.
Checkpoint capture(StageNetModel& model, std::uint64_t step, std::optional<NormStats> norm);
/// Copies parameters and moments into `model`; throws CheckpointError if a
/// tensor is missing or its shape differs.
void restore(StageNetModel& model, const Checkpoint& ckpt);

std::string serialize_checkpoint(const Checkpoint& ckpt);
/// Throws ParseError for malformed text and CheckpointError for a version or
/// shape mismatch.
Checkpoint parse_checkpoint(const std::string& text);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace stagenet
