#pragma once

#include <cstddef>
#include <cstdint>

#include <json.hpp>

#include "stagenet/data.hpp"

namespace stagenet {

/// Piecewise-stationary patient simulator with planted stage change points.
///
/// Each patient has a baseline level per feature and a noise scale drawn from
/// [min_volatility, max_volatility]. Stages are separated by change points at
/// which every feature mean jumps by jump_magnitude * max_volatility. A jump
/// is "deteriorating" along a fixed signature direction with probability
/// deteriorating_prob (archetype-dependent when n_archetypes > 1), otherwise
/// its signs are random. Labels follow
///   logit p_t = base_logit + severity_weight * (#deteriorating jumps so far)
///             + instability_weight * exp(-(t - last change) / instability_decay)
struct GeneratorConfig {
  std::size_t n_patients = 200;
  std::size_t n_features = 8;
  std::size_t min_length = 24;
  std::size_t max_length = 40;
  std::size_t min_stages = 1;
  std::size_t max_stages = 3;
  std::size_t min_stage_length = 5;
  double min_drift = 0.0;  // per-step slope within a stage, in noise units
  double max_drift = 0.0;
  double min_volatility = 0.5;
  double max_volatility = 0.5;
  double jump_magnitude = 3.0;
  double baseline_sd = 0.5;
  double mean_interval = 1.0;
  double deteriorating_prob = 0.6;
  double base_logit = -3.0;
  double severity_weight = 1.5;
  double instability_weight = 3.0;
  double instability_decay = 2.0;
  double missing_rate = 0.0;
  std::size_t n_archetypes = 1;
  std::uint64_t seed = 42;
};

/// Throws ConfigError for empty or inverted ranges.
void validate(const GeneratorConfig& config);

nlohmann::json generator_config_to_json(const GeneratorConfig& config);
/// Overwrites the fields present in `j`; unknown keys are a ConfigError.
void merge_generator_config(GeneratorConfig& config, const nlohmann::json& j);

Dataset generate_synthetic(const GeneratorConfig& config);

}  // namespace stagenet
