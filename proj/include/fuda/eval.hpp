#pragma once

#include "fuda/data.hpp"
#include "fuda/selection.hpp"
#include "fuda/trainer.hpp"

#include <optional>
#include <string>
#include <vector>

namespace fuda {

/// Fraction of argmax predictions equal to the held-out labels.
double target_accuracy(const Eigen::Ref<const Matrix>& predictions, const std::vector<int>& labels);

/// Fraction of targets whose matched labeled-source sample shares their class.
double matching_accuracy(const IndexList& matches, const std::vector<int>& target_labels,
                         const std::vector<int>& labeled_source_labels);

/// Per-group accuracy; an empty group is absent rather than zero.
struct BucketAccuracy {
  std::optional<double> easy;
  std::optional<double> hard;
  std::optional<double> outlier;
  Index easy_count = 0;
  Index hard_count = 0;
  Index outlier_count = 0;
};

BucketAccuracy bucket_accuracy(const DifficultySplit& split,
                               const Eigen::Ref<const Matrix>& predictions,
                               const std::vector<int>& labels);

/// The k targets closest to `query` by Euclidean distance, nearest first.
IndexList retrieve_nearest_targets(const Eigen::Ref<const RowVector>& query,
                                   const Eigen::Ref<const Matrix>& target_features, Index k = 3);

struct EmbeddingTable {
  IndexList ids;
  std::vector<DomainTag> domains;
  std::vector<std::optional<int>> labels;
  Matrix features;
};

/// CSV with header `index,domain,label,f_1..f_d`; an absent label is written empty.
void export_embeddings(const std::string& path, const EmbeddingTable& table);
EmbeddingTable read_embeddings(const std::string& path);

struct EpochMetrics {
  int epoch = 0;
  double target_accuracy = 0.0;
  std::optional<double> matching_accuracy;
  BucketAccuracy buckets;         ///< groups re-derived from this epoch's entropies
  BucketAccuracy frozen_buckets;  ///< groups fixed at the first evaluated epoch
  EpochLosses losses;
};

}  // namespace fuda
