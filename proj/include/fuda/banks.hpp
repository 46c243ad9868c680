#pragma once

#include "fuda/types.hpp"

#include <cstdint>
#include <vector>

namespace fuda {

struct KMeansResult {
  Matrix centers;  ///< k x d, unit-norm rows
  std::vector<int> assignments;
  double inertia = 0.0;  ///< within-cluster sum of squares of the converged partition
};

/// Lloyd k-means with k-means++ seeding and `restarts` independent starts; the
/// lowest-inertia partition wins. Centers are L2-normalized after convergence.
KMeansResult kmeans_prototypes(const Eigen::Ref<const Matrix>& features, int k, std::uint64_t seed,
                               int restarts = 8, int max_iterations = 100);

/// Source and target cluster centers with the per-sample cluster indices.
struct PrototypeBank {
  Matrix source_centers;
  Matrix target_centers;
  std::vector<int> source_clusters;
  std::vector<int> target_clusters;
  double momentum = 0.5;

  bool populated() const { return source_centers.rows() > 0 && target_centers.rows() > 0; }
};

/// Greedy one-to-one matching of new centers onto old ones by descending dot
/// product. Entry j is the old slot that new center j maps to.
std::vector<int> match_centers(const Eigen::Ref<const Matrix>& old_centers,
                               const Eigen::Ref<const Matrix>& new_centers);

/// center <- normalize(m * old + (1 - m) * new) after matching. Returns the
/// matched new centers' slots so assignments can be relabeled.
std::vector<int> blend_centers(Matrix& centers, const Eigen::Ref<const Matrix>& new_centers,
                               double momentum);

/// Momentum update of both domains' centers; new assignments are relabeled to
/// the matched slots. An empty bank is initialized directly.
PrototypeBank update_centers(PrototypeBank bank, const KMeansResult& source,
                             const KMeansResult& target);

/// Momentum feature store for the source domain, one unit-norm row per sample.
struct MemoryBank {
  Matrix features;
  double momentum = 0.5;

  bool populated() const { return features.rows() > 0; }
};

/// row <- normalize(m * old + (1 - m) * fresh); an empty bank takes the fresh rows.
MemoryBank update_memory_bank(MemoryBank bank, const Eigen::Ref<const Matrix>& fresh);

/// Row-wise L2 normalization; throws on a zero row.
Matrix normalize_rows(const Eigen::Ref<const Matrix>& m);

}  // namespace fuda
