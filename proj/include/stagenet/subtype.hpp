#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "stagenet/clustering.hpp"
#include "stagenet/data.hpp"
#include "stagenet/model.hpp"

namespace stagenet {

struct SubtypeResult {
  std::vector<std::string> patient_ids;
  ClusterResult clusters;
  std::vector<std::size_t> cluster_sizes;
  // Per cluster: fraction of positive visit labels, and mean predicted risk
  // over all valid visits.
  std::vector<double> label_rate;
  std::vector<double> mean_risk;
};

/// Representation of each patient at its last valid visit: ũ for StageNet,
/// h for the LSTM ablation (which has no convolution).
Matrix last_step_representations(StageNetModel& model, const Dataset& data);

/// Raw feature vector of each patient's last valid visit.
Matrix last_visit_features(const Dataset& data);

/// Clusters last-step representations with k-means. `data` must already be
/// normalised the way the model was trained.
SubtypeResult subtype(StageNetModel& model, const Dataset& data, std::size_t k,
                      std::uint64_t seed);

}  // namespace stagenet
