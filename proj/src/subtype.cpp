#include "stagenet/subtype.hpp"

#include "stagenet/error.hpp"

namespace stagenet {

namespace {

std::size_t last_valid(const PatientSequence& seq) {
  for (std::size_t t = seq.length(); t-- > 0;) {
    if (seq.mask.empty() || seq.mask[t] == 1) return t;
  }
  throw InputError("patient '" + seq.patient_id + "' has no valid visits");
}

Matrix representations(const std::vector<PredictionTrace>& traces, const Dataset& data) {
  Matrix x;
  x.reserve(traces.size());
  for (std::size_t i = 0; i < traces.size(); ++i) {
    if (traces[i].steps.empty()) {
      throw InputError("patient '" + data[i].patient_id + "' has no valid visits");
    }
    const PredictionStep& last = traces[i].steps.back();
    x.push_back(last.u_tilde.empty() ? last.h : last.u_tilde);
  }
  return x;
}

}  // namespace

Matrix last_step_representations(StageNetModel& model, const Dataset& data) {
  return representations(predict_all(model, data), data);
}

Matrix last_visit_features(const Dataset& data) {
  Matrix x;
  x.reserve(data.size());
  for (const PatientSequence& seq : data) x.push_back(seq.visits[last_valid(seq)]);
  return x;
}

SubtypeResult subtype(StageNetModel& model, const Dataset& data, std::size_t k,
                      std::uint64_t seed) {
  if (k > data.size()) {
    throw ConfigError("subtype: k = " + std::to_string(k) + " exceeds " +
                      std::to_string(data.size()) + " patients");
  }
  const auto traces = predict_all(model, data);
  const Matrix x = representations(traces, data);

  SubtypeResult out;
  KMeansOptions opts;
  opts.k = k;
  opts.seed = seed;
  out.clusters = kmeans(x, opts);

  std::vector<double> positives(k, 0.0), visits(k, 0.0), risk(k, 0.0);
  out.cluster_sizes.assign(k, 0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    out.patient_ids.push_back(data[i].patient_id);
    const auto c = static_cast<std::size_t>(out.clusters.assignments[i]);
    ++out.cluster_sizes[c];
    for (const PredictionStep& step : traces[i].steps) {
      positives[c] += data[i].labels[step.t];
      risk[c] += step.y_hat;
      visits[c] += 1.0;
    }
  }
  for (std::size_t c = 0; c < k; ++c) {
    out.label_rate.push_back(visits[c] > 0 ? positives[c] / visits[c] : 0.0);
    out.mean_risk.push_back(visits[c] > 0 ? risk[c] / visits[c] : 0.0);
  }
  return out;
}

}  // namespace stagenet
