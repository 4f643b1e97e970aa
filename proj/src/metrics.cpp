#include "stagenet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "stagenet/error.hpp"
#include "stagenet/rng.hpp"

namespace stagenet {

std::size_t ScoredSet::positives() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
}

std::size_t ScoredSet::negatives() const { return labels.size() - positives(); }

namespace {

void check(const ScoredSet& s, bool need_negatives, const char* name) {
  if (s.scores.size() != s.labels.size()) {
    throw MetricError(std::string(name) + ": scores and labels differ in length");
  }
  if (s.scores.empty()) throw MetricError(std::string(name) + ": empty input");
  for (double v : s.scores) {
    if (std::isnan(v)) throw MetricError(std::string(name) + ": NaN score");
  }
  if (s.positives() == 0) throw MetricError(std::string(name) + ": no positive labels");
  if (need_negatives && s.negatives() == 0) {
    throw MetricError(std::string(name) + ": no negative labels");
  }
}

std::vector<std::size_t> descending_order(const ScoredSet& s) {
  std::vector<std::size_t> idx(s.scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return s.scores[a] > s.scores[b]; });
  return idx;
}

/// Calls visit(tp, fp) after each block of tied scores, walking thresholds
/// from the highest score downwards.
template <class F>
void sweep_thresholds(const ScoredSet& s, F&& visit) {
  const auto idx = descending_order(s);
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < idx.size();) {
    const double score = s.scores[idx[i]];
    while (i < idx.size() && s.scores[idx[i]] == score) {
      (s.labels[idx[i]] == 1 ? tp : fp)++;
      ++i;
    }
    visit(tp, fp);
  }
}

}  // namespace

double auroc(const ScoredSet& s) {
  check(s, true, "auroc");
  std::vector<std::size_t> idx(s.scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return s.scores[a] < s.scores[b]; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && s.scores[idx[j]] == s.scores[idx[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k)
      if (s.labels[idx[k]] == 1) rank_sum += midrank;
    i = j;
  }
  const double np = static_cast<double>(s.positives());
  const double nn = static_cast<double>(s.negatives());
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

double auprc(const ScoredSet& s) {
  check(s, false, "auprc");
  const double np = static_cast<double>(s.positives());
  double ap = 0.0;
  double prev_recall = 0.0;
  sweep_thresholds(s, [&](std::size_t tp, std::size_t fp) {
    const double recall = static_cast<double>(tp) / np;
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  });
  return ap;
}

double min_re_p(const ScoredSet& s) {
  check(s, false, "min_re_p");
  const double np = static_cast<double>(s.positives());
  double best = 0.0;
  sweep_thresholds(s, [&](std::size_t tp, std::size_t fp) {
    const double recall = static_cast<double>(tp) / np;
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    best = std::max(best, std::min(recall, precision));
  });
  return best;
}

BootstrapResult bootstrap(const ScoredSet& s, const Metric& metric, std::size_t n_resamples,
                          std::uint64_t seed, std::size_t max_retries) {
  if (n_resamples == 0) throw MetricError("bootstrap: n_resamples must be >= 1");
  if (s.scores.size() != s.labels.size() || s.scores.empty()) {
    throw MetricError("bootstrap: scores and labels must be nonempty and equally long");
  }
  const std::size_t n = s.scores.size();
  std::vector<double> values;
  values.reserve(n_resamples);
  BootstrapResult out;
  ScoredSet sample;
  sample.scores.resize(n);
  sample.labels.resize(n);
  for (std::size_t r = 0; r < n_resamples; ++r) {
    Rng rng(mix_seed(seed, r));
    bool ok = false;
    for (std::size_t attempt = 0; attempt <= max_retries && !ok; ++attempt) {
      for (std::size_t i = 0; i < n; ++i) {
        const auto j = static_cast<std::size_t>(uniform_int(rng, 0, n - 1));
        sample.scores[i] = s.scores[j];
        sample.labels[i] = s.labels[j];
      }
      ok = sample.positives() > 0 && sample.negatives() > 0;
    }
    if (!ok) {
      ++out.skipped;
      continue;
    }
    values.push_back(metric(sample));
  }
  if (values.empty()) throw MetricError("bootstrap: metric was never computable");
  out.used = values.size();
  out.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() > 1) {
    double sq = 0.0;
    for (double v : values) sq += (v - out.mean) * (v - out.mean);
    out.std = std::sqrt(sq / static_cast<double>(values.size() - 1));
  }
  return out;
}

RiskBandTable risk_band_stage_table(std::span<const double> y_hat, std::span<const double> s) {
  if (y_hat.size() != s.size()) throw InputError("risk bands: predictions and s differ in length");
  if (y_hat.empty()) throw InputError("risk bands: no visits");
  RiskBandTable table;
  std::vector<double> groups[3];
  for (std::size_t i = 0; i < y_hat.size(); ++i) {
    const int band = y_hat[i] <= 0.4 ? 0 : (y_hat[i] < 0.7 ? 1 : 2);
    groups[band].push_back(s[i]);
  }
  BandSummary* bands[3] = {&table.low, &table.medium, &table.high};
  for (int b = 0; b < 3; ++b) {
    const auto& g = groups[b];
    bands[b]->count = g.size();
    if (g.empty()) continue;
    const double m = std::accumulate(g.begin(), g.end(), 0.0) / static_cast<double>(g.size());
    double sq = 0.0;
    for (double v : g) sq += (v - m) * (v - m);
    bands[b]->mean_s = m;
    bands[b]->std_s = std::sqrt(sq / static_cast<double>(g.size()));
  }
  return table;
}

}  // namespace stagenet
