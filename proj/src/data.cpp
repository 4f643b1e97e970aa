#include "stagenet/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "stagenet/error.hpp"

namespace stagenet {

using json = nlohmann::ordered_json;

namespace {

constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
constexpr double kStdFloor = 1e-6;

[[noreturn]] void fail(const PatientSequence& seq, const std::string& field,
                       const std::string& what) {
  throw LoadError("patient '" + seq.patient_id + "': field \"" + field + "\": " + what);
}

}  // namespace

std::size_t PatientSequence::valid_steps() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

void validate(const PatientSequence& seq, bool allow_missing) {
  const std::size_t t = seq.visits.size();
  if (t == 0) fail(seq, "visits", "sequence is empty");
  const std::size_t width = seq.visits.front().size();
  for (std::size_t i = 0; i < t; ++i) {
    if (seq.visits[i].size() != width) {
      fail(seq, "visits", "row " + std::to_string(i) + " has " +
                              std::to_string(seq.visits[i].size()) + " features, expected " +
                              std::to_string(width));
    }
    for (double v : seq.visits[i]) {
      if (std::isinf(v) || (!allow_missing && std::isnan(v))) {
        fail(seq, "visits", "non-finite value at row " + std::to_string(i));
      }
    }
  }
  if (seq.deltas.size() != t) fail(seq, "deltas", "length differs from visits");
  for (std::size_t i = 0; i < t; ++i) {
    if (!(seq.deltas[i] >= 0.0) || !std::isfinite(seq.deltas[i])) {
      fail(seq, "deltas", "negative or non-finite interval at index " + std::to_string(i));
    }
  }
  if (seq.deltas[0] != 0.0) fail(seq, "deltas", "first interval must be 0");
  if (seq.labels.size() != t) fail(seq, "labels", "length differs from visits");
  for (int y : seq.labels) {
    if (y != 0 && y != 1) fail(seq, "labels", "label " + std::to_string(y) + " is not binary");
  }
  if (seq.mask.size() != t) fail(seq, "mask", "length differs from visits");
  for (std::size_t i = 0; i < seq.change_points.size(); ++i) {
    if (seq.change_points[i] >= t || (i > 0 && seq.change_points[i] <= seq.change_points[i - 1])) {
      fail(seq, "change_points", "indices must be sorted, unique and inside the sequence");
    }
  }
}

PatientSequence parse_patient_line(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("dataset line is not valid JSON: ") + e.what());
  }
  PatientSequence seq;
  auto require = [&](const char* key) -> const json& {
    if (!j.is_object() || !j.contains(key)) fail(seq, key, "missing");
    return j.at(key);
  };
  try {
    const json& id = require("patient_id");
    if (!id.is_string()) fail(seq, "patient_id", "must be a string");
    seq.patient_id = id.get<std::string>();
    for (const json& d : require("deltas")) {
      if (!d.is_number()) fail(seq, "deltas", "entries must be numbers");
      seq.deltas.push_back(d.get<double>());
    }
    for (const json& y : require("labels")) {
      if (!y.is_number_integer()) fail(seq, "labels", "entries must be 0 or 1");
      seq.labels.push_back(y.get<int>());
    }
    for (const json& row : require("visits")) {
      if (!row.is_array()) fail(seq, "visits", "rows must be arrays");
      std::vector<double> r;
      r.reserve(row.size());
      for (const json& v : row) {
        if (v.is_null()) {
          r.push_back(kMissing);
        } else if (v.is_number()) {
          r.push_back(v.get<double>());
        } else {
          fail(seq, "visits", "entries must be numbers or null");
        }
      }
      seq.visits.push_back(std::move(r));
    }
    if (j.contains("change_points")) {
      for (const json& c : j.at("change_points")) {
        if (!c.is_number_unsigned()) fail(seq, "change_points", "entries must be indices");
        seq.change_points.push_back(c.get<std::size_t>());
      }
    }
    if (j.contains("archetype")) {
      if (!j.at("archetype").is_number_integer()) fail(seq, "archetype", "must be an integer");
      seq.archetype = j.at("archetype").get<int>();
    }
  } catch (const json::exception& e) {
    fail(seq, "?", e.what());
  }
  seq.mask.assign(seq.visits.size(), 1);
  validate(seq);
  return seq;
}

std::string format_patient_line(const PatientSequence& seq) {
  json j;
  j["patient_id"] = seq.patient_id;
  j["deltas"] = seq.deltas;
  j["labels"] = seq.labels;
  json visits = json::array();
  for (const auto& row : seq.visits) {
    json r = json::array();
    for (double v : row) r.push_back(std::isnan(v) ? json(nullptr) : json(v));
    visits.push_back(std::move(r));
  }
  j["visits"] = std::move(visits);
  if (!seq.change_points.empty()) j["change_points"] = seq.change_points;
  if (seq.archetype) j["archetype"] = *seq.archetype;
  return j.dump();
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open dataset '" + path.string() + "'");
  Dataset data;
  std::string line;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    PatientSequence seq = parse_patient_line(line);
    if (data.empty()) {
      width = seq.n_features();
    } else if (seq.n_features() != width) {
      fail(seq, "visits", "feature count " + std::to_string(seq.n_features()) +
                              " differs from dataset width " + std::to_string(width));
    }
    data.push_back(std::move(seq));
  }
  if (data.empty()) throw LoadError("dataset '" + path.string() + "' has no patients");
  return data;
}

void save_dataset(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw LoadError("cannot write dataset '" + path.string() + "'");
  for (const PatientSequence& seq : data) out << format_patient_line(seq) << '\n';
}

namespace {

std::vector<std::string> split_csv_row(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    cells.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_number(const std::string& cell, std::size_t line_no) {
  try {
    std::size_t used = 0;
    const double v = std::stod(cell, &used);
    if (used != cell.size()) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw ParseError("csv line " + std::to_string(line_no) + ": '" + cell + "' is not a number");
  }
}

}  // namespace

Dataset import_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open csv '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw ParseError("csv '" + path.string() + "' is empty");
  const auto header = split_csv_row(line);
  if (header.size() < 4 || header.front() != "patient_id" || header[1] != "time" ||
      header.back() != "label") {
    throw ParseError("csv header must be patient_id,time,<features...>,label");
  }
  const std::size_t n_features = header.size() - 3;
  Dataset data;
  std::vector<double> times;
  std::size_t line_no = 1;
  auto finish = [&]() {
    if (data.empty()) return;
    PatientSequence& seq = data.back();
    seq.deltas.resize(times.size());
    for (std::size_t i = 0; i < times.size(); ++i) {
      seq.deltas[i] = i == 0 ? 0.0 : times[i] - times[i - 1];
    }
    seq.mask.assign(seq.visits.size(), 1);
    validate(seq);
    times.clear();
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_csv_row(line);
    if (cells.size() != header.size()) {
      throw ParseError("csv line " + std::to_string(line_no) + ": expected " +
                       std::to_string(header.size()) + " cells, got " +
                       std::to_string(cells.size()));
    }
    if (data.empty() || data.back().patient_id != cells[0]) {
      finish();
      for (const auto& seq : data) {
        if (seq.patient_id == cells[0]) {
          throw ParseError("csv line " + std::to_string(line_no) + ": rows of patient '" +
                           cells[0] + "' are not contiguous");
        }
      }
      data.emplace_back();
      data.back().patient_id = cells[0];
    }
    PatientSequence& seq = data.back();
    times.push_back(parse_number(cells[1], line_no));
    std::vector<double> row(n_features);
    for (std::size_t f = 0; f < n_features; ++f) {
      const std::string& c = cells[2 + f];
      row[f] = (c.empty() || c == "NA" || c == "nan") ? kMissing : parse_number(c, line_no);
    }
    seq.visits.push_back(std::move(row));
    seq.labels.push_back(static_cast<int>(parse_number(cells.back(), line_no)));
  }
  finish();
  if (data.empty()) throw LoadError("csv '" + path.string() + "' has no rows");
  return data;
}

NormStats compute_norm_stats(const Dataset& train) {
  if (train.empty()) throw InputError("compute_norm_stats: empty training split");
  const std::size_t width = train.front().n_features();
  NormStats stats;
  stats.mean.assign(width, 0.0);
  stats.std.assign(width, 0.0);
  std::vector<std::size_t> filled(width, 0);
  std::size_t total = 0;
  // Means over forward-filled values; leading gaps are excluded.
  for (const PatientSequence& seq : train) {
    std::vector<double> last(width, kMissing);
    for (std::size_t t = 0; t < seq.length(); ++t) {
      if (!seq.mask.empty() && seq.mask[t] == 0) continue;
      ++total;
      for (std::size_t f = 0; f < width; ++f) {
        if (!std::isnan(seq.visits[t][f])) last[f] = seq.visits[t][f];
        if (!std::isnan(last[f])) {
          stats.mean[f] += last[f];
          ++filled[f];
        }
      }
    }
  }
  for (std::size_t f = 0; f < width; ++f) {
    if (filled[f] == 0) {
      throw InputError("compute_norm_stats: feature " + std::to_string(f) +
                       " is missing throughout the training split");
    }
    stats.mean[f] /= static_cast<double>(filled[f]);
  }
  // Leading gaps take the mean and so add nothing to the squared deviations.
  for (const PatientSequence& seq : forward_fill(train, stats)) {
    for (std::size_t t = 0; t < seq.length(); ++t) {
      if (!seq.mask.empty() && seq.mask[t] == 0) continue;
      for (std::size_t f = 0; f < width; ++f) {
        const double d = seq.visits[t][f] - stats.mean[f];
        stats.std[f] += d * d;
      }
    }
  }
  for (std::size_t f = 0; f < width; ++f) {
    stats.std[f] = std::max(std::sqrt(stats.std[f] / static_cast<double>(total)), kStdFloor);
  }
  return stats;
}

Dataset forward_fill(const Dataset& data, const NormStats& stats) {
  Dataset out = data;
  for (PatientSequence& seq : out) {
    if (seq.n_features() != stats.mean.size()) {
      throw InputError("forward_fill: patient '" + seq.patient_id + "' has " +
                       std::to_string(seq.n_features()) + " features, statistics have " +
                       std::to_string(stats.mean.size()));
    }
    for (std::size_t t = 0; t < seq.length(); ++t) {
      for (std::size_t f = 0; f < seq.n_features(); ++f) {
        double& v = seq.visits[t][f];
        if (std::isnan(v)) v = t == 0 ? stats.mean[f] : seq.visits[t - 1][f];
      }
    }
  }
  return out;
}

Dataset forward_fill_and_normalize(const Dataset& data, const NormStats& stats) {
  Dataset out = forward_fill(data, stats);
  for (PatientSequence& seq : out) {
    for (auto& row : seq.visits) {
      for (std::size_t f = 0; f < row.size(); ++f) {
        row[f] = (row[f] - stats.mean[f]) / stats.std[f];
      }
    }
    validate(seq, /*allow_missing=*/false);
  }
  return out;
}

PatientSequence truncate(const PatientSequence& seq, std::size_t max_len) {
  if (max_len == 0) throw InputError("truncate: max_len must be >= 1");
  if (seq.length() <= max_len) return seq;
  const std::size_t drop = seq.length() - max_len;
  const auto off = static_cast<std::ptrdiff_t>(drop);
  PatientSequence out;
  out.patient_id = seq.patient_id;
  out.archetype = seq.archetype;
  out.visits.assign(seq.visits.begin() + off, seq.visits.end());
  out.deltas.assign(seq.deltas.begin() + off, seq.deltas.end());
  out.deltas[0] = 0.0;
  out.labels.assign(seq.labels.begin() + off, seq.labels.end());
  out.mask.assign(seq.mask.begin() + off, seq.mask.end());
  for (std::size_t cp : seq.change_points) {
    if (cp > drop) out.change_points.push_back(cp - drop);
  }
  return out;
}

std::vector<Batch> make_batches(const Dataset& data, std::size_t batch_size,
                                std::size_t max_len) {
  if (batch_size == 0) throw InputError("make_batches: batch_size must be >= 1");
  std::vector<Batch> batches;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    Batch b;
    const std::size_t end = std::min(data.size(), start + batch_size);
    for (std::size_t i = start; i < end; ++i) {
      b.sequences.push_back(truncate(data[i], max_len));
      b.length = std::max(b.length, b.sequences.back().length());
    }
    for (PatientSequence& seq : b.sequences) {
      const std::size_t width = seq.n_features();
      while (seq.length() < b.length) {
        seq.visits.emplace_back(width, 0.0);
        seq.deltas.push_back(0.0);
        seq.labels.push_back(0);
        seq.mask.push_back(0);
      }
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

}  // namespace stagenet
