#include "stagenet/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "stagenet/error.hpp"
#include "stagenet/rng.hpp"

namespace stagenet {

namespace {

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
  return d;
}

std::size_t count_clusters(std::span<const int> assignments) {
  int k = 0;
  for (int a : assignments) {
    if (a < 0) throw InputError("cluster ids must be nonnegative");
    k = std::max(k, a + 1);
  }
  return static_cast<std::size_t>(k);
}

Matrix plus_plus_seed(const Matrix& x, std::size_t k, Rng& rng) {
  const std::size_t n = x.size();
  Matrix centers;
  centers.push_back(x[uniform_int(rng, 0, n - 1)]);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  while (centers.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], sq_dist(x[i], centers.back()));
      total += d2[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      // Sample proportionally to squared distance; zero-weight points are never picked.
      const double r = uniform01(rng) * total;
      double acc = 0.0;
      std::size_t last_positive = 0;
      bool found = false;
      for (std::size_t i = 0; i < n && !found; ++i) {
        if (d2[i] == 0.0) continue;
        last_positive = i;
        acc += d2[i];
        if (acc > r) {
          pick = i;
          found = true;
        }
      }
      if (!found) pick = last_positive;
    } else {
      pick = uniform_int(rng, 0, n - 1);
    }
    centers.push_back(x[pick]);
  }
  return centers;
}

struct LloydRun {
  std::vector<int> assignments;
  Matrix centroids;
  double wcss = 0.0;
  std::size_t iterations = 0;
  std::vector<double> history;
};

LloydRun lloyd(const Matrix& x, Matrix centers, std::size_t max_iter) {
  const std::size_t n = x.size(), k = centers.size(), d = x.front().size();
  LloydRun run;
  run.assignments.assign(n, -1);
  for (std::size_t it = 0; it < max_iter; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double best_d = sq_dist(x[i], centers[0]);
      for (std::size_t c = 1; c < k; ++c) {
        const double dc = sq_dist(x[i], centers[c]);
        if (dc < best_d) {
          best_d = dc;
          best = static_cast<int>(c);
        }
      }
      if (run.assignments[i] != best) {
        run.assignments[i] = best;
        changed = true;
      }
    }
    // Re-seed empty clusters with the point farthest from its centroid.
    std::vector<std::size_t> counts(k, 0);
    for (int a : run.assignments) ++counts[static_cast<std::size_t>(a)];
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        const auto a = static_cast<std::size_t>(run.assignments[i]);
        if (counts[a] <= 1) continue;
        const double di = sq_dist(x[i], centers[a]);
        if (di > far_d) {
          far_d = di;
          far = i;
        }
      }
      --counts[static_cast<std::size_t>(run.assignments[far])];
      run.assignments[far] = static_cast<int>(c);
      counts[c] = 1;
      changed = true;
    }
    for (auto& c : centers) std::fill(c.begin(), c.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      auto& c = centers[static_cast<std::size_t>(run.assignments[i])];
      for (std::size_t j = 0; j < d; ++j) c[j] += x[i][j];
    }
    for (std::size_t c = 0; c < k; ++c)
      for (double& v : centers[c]) v /= static_cast<double>(counts[c]);
    double wcss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      wcss += sq_dist(x[i], centers[static_cast<std::size_t>(run.assignments[i])]);
    }
    run.history.push_back(wcss);
    run.wcss = wcss;
    run.iterations = it + 1;
    if (!changed) break;
  }
  run.centroids = std::move(centers);
  return run;
}

}  // namespace

ClusterResult kmeans(const Matrix& x, const KMeansOptions& options) {
  const std::size_t n = x.size();
  if (options.k < 2) throw InputError("kmeans: k must be >= 2");
  if (n < options.k) {
    throw InputError("kmeans: " + std::to_string(n) + " points cannot form " +
                     std::to_string(options.k) + " clusters");
  }
  const std::size_t d = x.front().size();
  for (const auto& row : x) {
    if (row.size() != d) throw DimensionError("kmeans: rows differ in width");
  }
  LloydRun best;
  bool have = false;
  for (std::size_t r = 0; r < std::max<std::size_t>(options.n_init, 1); ++r) {
    Rng rng(mix_seed(options.seed, r));
    LloydRun run = lloyd(x, plus_plus_seed(x, options.k, rng), std::max<std::size_t>(options.max_iter, 1));
    if (!have || run.wcss < best.wcss) {
      best = std::move(run);
      have = true;
    }
  }
  ClusterResult out;
  out.assignments = std::move(best.assignments);
  out.centroids = std::move(best.centroids);
  out.wcss = best.wcss;
  out.iterations = best.iterations;
  out.wcss_history = std::move(best.history);
  if (n > options.k) {
    const ChScore ch = calinski_harabasz(x, out.assignments);
    out.ch_score = ch.value;
    out.ch_infinite = ch.infinite;
  }
  return out;
}

ChScore calinski_harabasz(const Matrix& x, std::span<const int> assignments) {
  const std::size_t n = x.size();
  if (assignments.size() != n) throw DimensionError("calinski_harabasz: assignment count differs");
  const std::size_t k = count_clusters(assignments);
  if (k < 2) throw InputError("calinski_harabasz: need at least 2 clusters");
  if (n <= k) throw InputError("calinski_harabasz: need more points than clusters");
  const std::size_t d = x.front().size();
  std::vector<double> grand(d, 0.0);
  Matrix centroids(k, std::vector<double>(d, 0.0));
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<std::size_t>(assignments[i]);
    ++counts[c];
    for (std::size_t j = 0; j < d; ++j) {
      centroids[c][j] += x[i][j];
      grand[j] += x[i][j];
    }
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] == 0) throw InputError("calinski_harabasz: cluster " + std::to_string(c) + " is empty");
    for (double& v : centroids[c]) v /= static_cast<double>(counts[c]);
  }
  for (double& v : grand) v /= static_cast<double>(n);
  double between = 0.0, within = 0.0;
  for (std::size_t c = 0; c < k; ++c) between += static_cast<double>(counts[c]) * sq_dist(centroids[c], grand);
  for (std::size_t i = 0; i < n; ++i) within += sq_dist(x[i], centroids[static_cast<std::size_t>(assignments[i])]);
  if (within == 0.0) return {std::numeric_limits<double>::infinity(), true};
  const double dn = static_cast<double>(n), dk = static_cast<double>(k);
  return {(between / within) * ((dn - dk) / (dk - 1.0)), false};
}

double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw DimensionError("adjusted_rand_index: length mismatch");
  const std::size_t ka = count_clusters(a), kb = count_clusters(b);
  std::vector<std::vector<double>> table(ka, std::vector<double>(kb, 0.0));
  for (std::size_t i = 0; i < a.size(); ++i) table[static_cast<std::size_t>(a[i])][static_cast<std::size_t>(b[i])] += 1.0;
  auto pairs = [](double m) { return m * (m - 1.0) / 2.0; };
  double index = 0.0, sum_a = 0.0, sum_b = 0.0;
  std::vector<double> col(kb, 0.0);
  for (std::size_t i = 0; i < ka; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < kb; ++j) {
      index += pairs(table[i][j]);
      row += table[i][j];
      col[j] += table[i][j];
    }
    sum_a += pairs(row);
  }
  for (double c : col) sum_b += pairs(c);
  const double total = pairs(static_cast<double>(a.size()));
  const double expected = sum_a * sum_b / total;
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

double matching_accuracy(std::span<const int> clusters, std::span<const int> reference) {
  if (clusters.size() != reference.size() || clusters.empty()) {
    throw DimensionError("matching_accuracy: lengths differ or are zero");
  }
  const std::size_t k = std::max(count_clusters(clusters), count_clusters(reference));
  if (k > 8) throw InputError("matching_accuracy: at most 8 groups supported");
  std::vector<std::vector<std::size_t>> table(k, std::vector<std::size_t>(k, 0));
  for (std::size_t i = 0; i < clusters.size(); ++i)
    ++table[static_cast<std::size_t>(clusters[i])][static_cast<std::size_t>(reference[i])];
  std::vector<std::size_t> perm(k);
  std::iota(perm.begin(), perm.end(), 0);
  std::size_t best = 0;
  do {
    std::size_t hits = 0;
    for (std::size_t c = 0; c < k; ++c) hits += table[c][perm[c]];
    best = std::max(best, hits);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return static_cast<double>(best) / static_cast<double>(clusters.size());
}

}  // namespace stagenet
