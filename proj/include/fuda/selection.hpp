#pragma once

// Confidence machinery shared by cross-domain and intra-domain dispersal.
// Every ordering is stable: ties go to the lowest original index.

#include "fuda/losses.hpp"
#include "fuda/types.hpp"

#include <algorithm>
#include <cmath>
#include <iosfwd>
#include <numeric>

namespace fuda {

struct EntropyTable {
  Vector values;  ///< entropy of each target prediction
  int epoch = 0;

  Index size() const { return values.size(); }
};

/// Euclidean distances between target rows and labeled-source rows.
struct ScoreMatrix {
  Matrix distances;  ///< N_ut x N_ls
  int epoch = 0;
};

/// Entropy-ordered partition of the target set into easy, hard and outlier groups.
struct DifficultySplit {
  IndexList easy;
  IndexList hard;
  IndexList outlier;
  double easy_ratio = 0.0;
  double hard_ratio = 0.0;

  Index total() const { return static_cast<Index>(easy.size() + hard.size() + outlier.size()); }
};

/// floor(ratio * n), tolerant of representation error in `ratio`.
inline Index ratio_count(double ratio, Index n) {
  return static_cast<Index>(std::floor(ratio * static_cast<double>(n) + 1e-9));
}

/// Indices that sort `values` ascending; equal values keep index order.
template <typename Derived>
IndexList stable_argsort(const Eigen::DenseBase<Derived>& values) {
  IndexList order(static_cast<std::size_t>(values.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return values(a) < values(b); });
  return order;
}

/// Row-by-row Euclidean distances ||a_i - b_j||.
template <typename DerivedA, typename DerivedB>
MatrixX<typename DerivedA::Scalar> pairwise_distances(const Eigen::MatrixBase<DerivedA>& a,
                                                      const Eigen::MatrixBase<DerivedB>& b) {
  if (a.cols() != b.cols()) throw Error("pairwise_distances: dimension mismatch");
  MatrixX<typename DerivedA::Scalar> d(a.rows(), b.rows());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < b.rows(); ++j) d(i, j) = (a.row(i) - b.row(j)).norm();
  return d;
}

EntropyTable compute_entropy_table(const Eigen::Ref<const Matrix>& target_predictions, int epoch = 0);

ScoreMatrix compute_score_matrix(const Eigen::Ref<const Matrix>& target_features,
                                 const Eigen::Ref<const Matrix>& labeled_source_features,
                                 int epoch = 0);

/// Column of the smallest distance in every row.
IndexList nearest_source_match(const ScoreMatrix& scores);

/// The floor(ratio * N) lowest-entropy targets, in ascending entropy order.
IndexList top_confident_targets(const EntropyTable& table, double ratio);

DifficultySplit split_by_difficulty(const EntropyTable& table, double easy_ratio, double hard_ratio);

void dump_score_matrix(std::ostream& out, const ScoreMatrix& scores);
void dump_entropy_table(std::ostream& out, const EntropyTable& table);
void dump_split(std::ostream& out, const DifficultySplit& split);

}  // namespace fuda
