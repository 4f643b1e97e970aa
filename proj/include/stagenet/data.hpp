#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace stagenet {

/// One patient's visit history. Missing measurements are NaN until
/// forward_fill_and_normalize() replaces them.
struct PatientSequence {
  std::string patient_id;
  std::vector<std::vector<double>> visits;  // T rows of N_v features
  std::vector<double> deltas;               // elapsed time since previous visit, deltas[0] = 0
  std::vector<int> labels;                  // y_t in {0, 1}
  std::vector<std::uint8_t> mask;           // 1 = real visit, 0 = padding
  std::vector<std::size_t> change_points;   // synthetic ground truth, sorted
  std::optional<int> archetype;             // synthetic ground truth

  std::size_t length() const { return visits.size(); }
  std::size_t n_features() const { return visits.empty() ? 0 : visits.front().size(); }
  std::size_t valid_steps() const;
};

using Dataset = std::vector<PatientSequence>;

/// Checks the record invariants; throws LoadError naming the patient and the
/// offending field. NaN visit entries are allowed unless `allow_missing` is
/// false.
void validate(const PatientSequence& seq, bool allow_missing = true);

// JSON-lines persistence, one patient per line.
PatientSequence parse_patient_line(const std::string& line);
std::string format_patient_line(const PatientSequence& seq);
Dataset load_dataset(const std::filesystem::path& path);
void save_dataset(const Dataset& data, const std::filesystem::path& path);

/// Long-format CSV: a header `patient_id,time,<features...>,label` and one
/// row per visit. Rows of one patient must be contiguous and time-ordered.
/// Empty feature cells are missing values.
Dataset import_csv(const std::filesystem::path& path);

struct NormStats {
  std::vector<double> mean;
  std::vector<double> std;
};

/// Per-feature statistics of the training split after filling: the mean of
/// forward-filled observations, and the population std once leading gaps are
/// set to that mean. std is floored at 1e-6.
NormStats compute_norm_stats(const Dataset& train);

/// Replaces each NaN with the patient's most recent prior observation of that
/// feature, or with the training mean if none exists.
Dataset forward_fill(const Dataset& data, const NormStats& stats);

/// forward_fill() followed by per-feature z-scoring. Throws LoadError if a
/// non-finite value survives.
Dataset forward_fill_and_normalize(const Dataset& data, const NormStats& stats);

/// Keeps the most recent `max_len` visits. deltas[0] of the kept suffix is
/// reset to 0 and change points are re-indexed.
PatientSequence truncate(const PatientSequence& seq, std::size_t max_len);

struct Batch {
  std::vector<PatientSequence> sequences;  // each right-padded to `length`
  std::size_t length = 0;
};

/// Splits `data` in order into batches of at most `batch_size` sequences,
/// truncating to `max_len` and right-padding with mask = 0.
std::vector<Batch> make_batches(const Dataset& data, std::size_t batch_size,
                                std::size_t max_len = 400);

}  // namespace stagenet
