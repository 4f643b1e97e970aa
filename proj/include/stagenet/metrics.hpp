#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace stagenet {

struct ScoredSet {
  std::vector<double> scores;
  std::vector<int> labels;  // 0 or 1

  std::size_t positives() const;
  std::size_t negatives() const;
};

/// Mann–Whitney form P(score_pos > score_neg) + ½P(tie), via midranks.
/// Throws MetricError unless both classes are present.
double auroc(const ScoredSet& s);

/// Step-wise average precision Σ (R_n − R_{n−1}) P_n over distinct score
/// thresholds in descending order. Throws MetricError without positives.
double auprc(const ScoredSet& s);

/// max over thresholds of min(recall, precision). Throws MetricError without
/// positives.
double min_re_p(const ScoredSet& s);

using Metric = std::function<double(const ScoredSet&)>;

struct BootstrapResult {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation across resamples
  std::size_t used = 0;
  std::size_t skipped = 0;  // resamples still single-class after all retries
};

/// Sample-level bootstrap. Resample r draws indices from a stream seeded by
/// (seed, r), so results are independent of evaluation order. A resample
/// lacking a class is redrawn up to `max_retries` times, then skipped.
BootstrapResult bootstrap(const ScoredSet& s, const Metric& metric, std::size_t n_resamples,
                          std::uint64_t seed, std::size_t max_retries = 10);

struct BandSummary {
  std::string name;
  std::size_t count = 0;
  double mean_s = 0.0;
  double std_s = 0.0;
  bool present() const { return count > 0; }
};

/// Visits partitioned by predicted risk: low (ŷ ≤ 0.4), medium
/// (0.4 < ŷ < 0.7), high (ŷ ≥ 0.7).
struct RiskBandTable {
  BandSummary low{"low"};
  BandSummary medium{"medium"};
  BandSummary high{"high"};
};

RiskBandTable risk_band_stage_table(std::span<const double> y_hat, std::span<const double> s);

}  // namespace stagenet
