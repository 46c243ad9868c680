#include "fuda/selection.hpp"

#include <iomanip>
#include <ostream>

namespace fuda {

EntropyTable compute_entropy_table(const Eigen::Ref<const Matrix>& target_predictions, int epoch) {
  if (target_predictions.rows() == 0) throw Error("compute_entropy_table: no target predictions");
  return EntropyTable{row_entropies(target_predictions), epoch};
}

ScoreMatrix compute_score_matrix(const Eigen::Ref<const Matrix>& target_features,
                                 const Eigen::Ref<const Matrix>& labeled_source_features,
                                 int epoch) {
  if (labeled_source_features.rows() == 0)
    throw Error("compute_score_matrix: no labeled source samples to match against");
  return ScoreMatrix{pairwise_distances(target_features, labeled_source_features), epoch};
}

IndexList nearest_source_match(const ScoreMatrix& scores) {
  const Matrix& m = scores.distances;
  IndexList match(static_cast<std::size_t>(m.rows()));
  for (Index i = 0; i < m.rows(); ++i) {
    Index best = 0;
    for (Index j = 1; j < m.cols(); ++j)
      if (m(i, j) < m(i, best)) best = j;
    match[static_cast<std::size_t>(i)] = best;
  }
  return match;
}

IndexList top_confident_targets(const EntropyTable& table, double ratio) {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw Error("top_confident_targets: ratio must lie in (0, 1]");
  const Index count = ratio_count(ratio, table.size());
  if (count == 0)
    throw Error("top_confident_targets: ratio selects no targets; disable cross-domain dispersal");
  IndexList order = stable_argsort(table.values);
  order.resize(static_cast<std::size_t>(count));
  return order;
}

DifficultySplit split_by_difficulty(const EntropyTable& table, double easy_ratio, double hard_ratio) {
  if (!(easy_ratio >= 0.0) || !(hard_ratio >= 0.0) || easy_ratio + hard_ratio > 1.0 + 1e-12)
    throw Error("split_by_difficulty: ratios must be nonnegative with sum at most 1");
  const Index n = table.size();
  const Index n1 = ratio_count(easy_ratio, n);
  const Index n2 = std::min(ratio_count(hard_ratio, n), n - n1);
  const IndexList order = stable_argsort(table.values);
  DifficultySplit split;
  split.easy_ratio = easy_ratio;
  split.hard_ratio = hard_ratio;
  split.easy.assign(order.begin(), order.begin() + n1);
  split.hard.assign(order.begin() + n1, order.begin() + n1 + n2);
  split.outlier.assign(order.begin() + n1 + n2, order.end());
  return split;
}

void dump_score_matrix(std::ostream& out, const ScoreMatrix& scores) {
  out << "# epoch " << scores.epoch << ": rows = targets, columns = labeled source\n";
  out << std::setprecision(17);
  for (Index i = 0; i < scores.distances.rows(); ++i) {
    for (Index j = 0; j < scores.distances.cols(); ++j) out << (j ? "," : "") << scores.distances(i, j);
    out << '\n';
  }
}

void dump_entropy_table(std::ostream& out, const EntropyTable& table) {
  out << "target,entropy\n" << std::setprecision(17);
  for (Index i = 0; i < table.size(); ++i) out << i << ',' << table.values(i) << '\n';
}

void dump_split(std::ostream& out, const DifficultySplit& split) {
  out << "target,group\n";
  for (Index i : split.easy) out << i << ",easy\n";
  for (Index i : split.hard) out << i << ",hard\n";
  for (Index i : split.outlier) out << i << ",outlier\n";
}

}  // namespace fuda
