#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace stagenet {

using Matrix = std::vector<std::vector<double>>;  // n rows of d columns

struct KMeansOptions {
  std::size_t k = 2;
  std::uint64_t seed = 0;
  std::size_t n_init = 10;
  std::size_t max_iter = 300;
};

struct ClusterResult {
  std::vector<int> assignments;  // in [0, k)
  Matrix centroids;              // k × d
  double wcss = 0.0;             // within-cluster sum of squares
  double ch_score = 0.0;
  bool ch_infinite = false;      // tr(W) = 0
  std::size_t iterations = 0;
  /// WCSS after each Lloyd iteration of the winning restart.
  std::vector<double> wcss_history;
};

/// Lloyd's algorithm with k-means++ seeding; the restart with the lowest
/// WCSS wins. A cluster that empties is re-seeded with the point farthest
/// from its centroid. Throws InputError if n < k or k < 2.
ClusterResult kmeans(const Matrix& x, const KMeansOptions& options);

struct ChScore {
  double value = 0.0;
  bool infinite = false;
};

/// [tr(B)/tr(W)]·[(n−k)/(k−1)] with B = Σ_c n_c‖μ_c − μ‖², W = Σ_c Σ_{x∈c} ‖x − μ_c‖².
/// A zero tr(W) yields {+inf, true}. Throws InputError for k < 2, an empty
/// cluster or n ≤ k.
ChScore calinski_harabasz(const Matrix& x, std::span<const int> assignments);

double adjusted_rand_index(std::span<const int> a, std::span<const int> b);

/// Fraction of points whose cluster matches the reference label under the
/// best one-to-one relabelling (exhaustive over permutations, k ≤ 8).
double matching_accuracy(std::span<const int> clusters, std::span<const int> reference);

}  // namespace stagenet
