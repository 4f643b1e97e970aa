#include "stagenet/generator.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <string>

#include "stagenet/error.hpp"
#include "stagenet/rng.hpp"

namespace stagenet {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("generator: " + what);
}

std::vector<std::size_t> place_change_points(Rng& rng, std::size_t length,
                                             std::size_t n_changes,
                                             std::size_t min_gap) {
  // Rejection sampling; fall back to fewer stages if the sequence is too short.
  while (n_changes > 0) {
    if ((n_changes + 1) * min_gap <= length) {
      for (int attempt = 0; attempt < 200; ++attempt) {
        std::vector<std::size_t> cps;
        for (std::size_t i = 0; i < n_changes; ++i) {
          cps.push_back(uniform_int(rng, min_gap, length - min_gap));
        }
        std::sort(cps.begin(), cps.end());
        bool ok = true;
        for (std::size_t i = 1; i < cps.size(); ++i) ok = ok && cps[i] - cps[i - 1] >= min_gap;
        if (ok) return cps;
      }
    }
    --n_changes;
  }
  return {};
}

}  // namespace

void validate(const GeneratorConfig& c) {
  require(c.n_patients >= 1, "n_patients must be >= 1");
  require(c.n_features >= 1, "n_features must be >= 1");
  require(c.min_length >= 1 && c.min_length <= c.max_length, "length range is empty");
  require(c.min_stages >= 1 && c.min_stages <= c.max_stages, "stage range is empty");
  require(c.min_stage_length >= 1, "min_stage_length must be >= 1");
  require(c.min_drift <= c.max_drift, "drift range is empty");
  require(c.min_volatility > 0.0 && c.min_volatility <= c.max_volatility,
          "volatility range is empty or non-positive");
  require(c.jump_magnitude >= 0.0, "jump_magnitude must be >= 0");
  require(c.baseline_sd >= 0.0, "baseline_sd must be >= 0");
  require(c.mean_interval > 0.0, "mean_interval must be > 0");
  require(c.deteriorating_prob >= 0.0 && c.deteriorating_prob <= 1.0,
          "deteriorating_prob must lie in [0, 1]");
  require(c.instability_decay > 0.0, "instability_decay must be > 0");
  require(c.missing_rate >= 0.0 && c.missing_rate < 1.0, "missing_rate must lie in [0, 1)");
  require(c.n_archetypes >= 1, "n_archetypes must be >= 1");
}

using json = nlohmann::json;

#define STAGENET_GENERATOR_FIELDS(X)                                                    \
  X(n_patients) X(n_features) X(min_length) X(max_length) X(min_stages) X(max_stages) \
  X(min_stage_length) X(min_drift) X(max_drift) X(min_volatility) X(max_volatility)   \
  X(jump_magnitude) X(baseline_sd) X(mean_interval) X(deteriorating_prob)             \
  X(base_logit) X(severity_weight) X(instability_weight) X(instability_decay)         \
  X(missing_rate) X(n_archetypes) X(seed)

json generator_config_to_json(const GeneratorConfig& c) {
  json j = json::object();
#define X(field) j[#field] = c.field;
  STAGENET_GENERATOR_FIELDS(X)
#undef X
  return j;
}

void merge_generator_config(GeneratorConfig& c, const json& j) {
  if (!j.is_object()) throw ConfigError("generator config must be a JSON object");
  const std::map<std::string, std::function<void(const json&)>> setters = {
#define X(field) {#field, [&c](const json& v) { c.field = v.get<decltype(c.field)>(); }},
      STAGENET_GENERATOR_FIELDS(X)
#undef X
  };
  for (const auto& [key, value] : j.items()) {
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("unknown generator config field '" + key + "'");
    try {
      it->second(value);
    } catch (const json::exception& e) {
      throw ConfigError("generator config field '" + key + "': " + e.what());
    }
  }
}

#undef STAGENET_GENERATOR_FIELDS

Dataset generate_synthetic(const GeneratorConfig& config) {
  validate(config);
  const std::size_t nf = config.n_features;

  // Deterioration signature: the first half of the features fall, the rest rise.
  std::vector<double> signature(nf);
  for (std::size_t f = 0; f < nf; ++f) signature[f] = f < (nf + 1) / 2 ? -1.0 : 1.0;
  const double jump = config.jump_magnitude * config.max_volatility;

  Dataset data;
  data.reserve(config.n_patients);
  for (std::size_t p = 0; p < config.n_patients; ++p) {
    Rng rng(mix_seed(config.seed, p));
    PatientSequence seq;
    seq.patient_id = "P" + std::to_string(p);

    double det_prob = config.deteriorating_prob;
    if (config.n_archetypes > 1) {
      const std::size_t a = p % config.n_archetypes;
      seq.archetype = static_cast<int>(a);
      det_prob = static_cast<double>(a) / static_cast<double>(config.n_archetypes - 1);
    }

    const auto length =
        static_cast<std::size_t>(uniform_int(rng, config.min_length, config.max_length));
    const auto stages =
        static_cast<std::size_t>(uniform_int(rng, config.min_stages, config.max_stages));
    seq.change_points = place_change_points(rng, length, stages - 1, config.min_stage_length);

    const double sigma = uniform(rng, config.min_volatility, config.max_volatility);
    std::vector<double> level(nf);
    for (double& l : level) l = config.baseline_sd * normal(rng);

    auto new_drift = [&]() {
      std::vector<double> d(nf);
      for (double& e : d) {
        e = uniform(rng, config.min_drift, config.max_drift) * sigma;
        if (bernoulli(rng, 0.5)) e = -e;
      }
      return d;
    };
    std::vector<double> drift = new_drift();

    int severity = 0;
    std::size_t stage_start = 0;
    double since_change = std::numeric_limits<double>::infinity();
    std::size_t next_cp = 0;
    for (std::size_t t = 0; t < length; ++t) {
      if (next_cp < seq.change_points.size() && seq.change_points[next_cp] == t) {
        ++next_cp;
        const bool deteriorating = bernoulli(rng, det_prob);
        for (std::size_t f = 0; f < nf; ++f) {
          const double dir = deteriorating ? signature[f] : (bernoulli(rng, 0.5) ? 1.0 : -1.0);
          level[f] += dir * jump;
        }
        if (deteriorating) ++severity;
        drift = new_drift();
        stage_start = t;
        since_change = 0.0;
      }

      const double delta = t == 0 ? 0.0 : -config.mean_interval * std::log(1.0 - uniform01(rng));
      std::vector<double> row(nf);
      for (std::size_t f = 0; f < nf; ++f) {
        row[f] = level[f] + drift[f] * static_cast<double>(t - stage_start) + sigma * normal(rng);
        if (config.missing_rate > 0.0 && t > 0 && bernoulli(rng, config.missing_rate)) {
          row[f] = std::numeric_limits<double>::quiet_NaN();
        }
      }

      const double instability = std::isinf(since_change)
                                     ? 0.0
                                     : std::exp(-since_change / config.instability_decay);
      const double logit = config.base_logit + config.severity_weight * severity +
                           config.instability_weight * instability;
      const double prob = 1.0 / (1.0 + std::exp(-logit));

      seq.visits.push_back(std::move(row));
      seq.deltas.push_back(delta);
      seq.labels.push_back(bernoulli(rng, prob) ? 1 : 0);
      seq.mask.push_back(1);
      since_change += 1.0;
    }
    data.push_back(std::move(seq));
  }
  return data;
}

}  // namespace stagenet
