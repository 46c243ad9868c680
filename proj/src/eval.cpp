#include "fuda/eval.hpp"

#include "fuda/xvd.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

namespace fuda {

double target_accuracy(const Eigen::Ref<const Matrix>& predictions, const std::vector<int>& labels) {
  if (static_cast<Index>(labels.size()) != predictions.rows())
    throw Error("target_accuracy: labels do not align with predictions");
  if (labels.empty()) return 0.0;
  Index correct = 0;
  for (Index i = 0; i < predictions.rows(); ++i)
    if (argmax_class(predictions.row(i)) == labels[static_cast<std::size_t>(i)]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double matching_accuracy(const IndexList& matches, const std::vector<int>& target_labels,
                         const std::vector<int>& labeled_source_labels) {
  if (matches.size() != target_labels.size())
    throw Error("matching_accuracy: matches do not align with target labels");
  if (matches.empty()) return 0.0;
  Index agree = 0;
  for (std::size_t i = 0; i < matches.size(); ++i) {
    const Index j = matches[i];
    if (j < 0 || j >= static_cast<Index>(labeled_source_labels.size()))
      throw Error("matching_accuracy: match index out of range");
    if (labeled_source_labels[static_cast<std::size_t>(j)] == target_labels[i]) ++agree;
  }
  return static_cast<double>(agree) / static_cast<double>(matches.size());
}

BucketAccuracy bucket_accuracy(const DifficultySplit& split,
                               const Eigen::Ref<const Matrix>& predictions,
                               const std::vector<int>& labels) {
  auto group = [&](const IndexList& members, Index& count) -> std::optional<double> {
    count = static_cast<Index>(members.size());
    if (members.empty()) return std::nullopt;
    Index correct = 0;
    for (Index i : members)
      if (argmax_class(predictions.row(i)) == labels.at(static_cast<std::size_t>(i))) ++correct;
    return static_cast<double>(correct) / static_cast<double>(members.size());
  };
  BucketAccuracy acc;
  acc.easy = group(split.easy, acc.easy_count);
  acc.hard = group(split.hard, acc.hard_count);
  acc.outlier = group(split.outlier, acc.outlier_count);
  return acc;
}

IndexList retrieve_nearest_targets(const Eigen::Ref<const RowVector>& query,
                                   const Eigen::Ref<const Matrix>& target_features, Index k) {
  if (k < 0 || k > target_features.rows())
    throw Error("retrieve_nearest_targets: k exceeds the number of targets");
  if (query.size() != target_features.cols())
    throw Error("retrieve_nearest_targets: dimension mismatch");
  Vector distances(target_features.rows());
  for (Index i = 0; i < target_features.rows(); ++i)
    distances(i) = (target_features.row(i) - query).norm();
  IndexList order = stable_argsort(distances);
  order.resize(static_cast<std::size_t>(k));
  return order;
}

void export_embeddings(const std::string& path, const EmbeddingTable& table) {
  const auto n = static_cast<std::size_t>(table.features.rows());
  if (table.ids.size() != n || table.domains.size() != n || table.labels.size() != n)
    throw Error("export_embeddings: arrays are not aligned");
  std::ofstream out(path);
  if (!out) throw Error("cannot write embeddings to " + path);
  out << "index,domain,label";
  for (Index j = 0; j < table.features.cols(); ++j) out << ",f_" << (j + 1);
  out << '\n' << std::setprecision(17);
  for (std::size_t i = 0; i < n; ++i) {
    out << table.ids[i] << ',' << to_string(table.domains[i]) << ',';
    if (table.labels[i]) out << *table.labels[i];
    for (Index j = 0; j < table.features.cols(); ++j)
      out << ',' << table.features(static_cast<Index>(i), j);
    out << '\n';
  }
  if (!out) throw Error("failed writing embeddings to " + path);
}

EmbeddingTable read_embeddings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open embeddings " + path);
  std::string line;
  if (!std::getline(in, line)) throw Error(path + ": missing header");
  EmbeddingTable table;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string cell;
    std::getline(fields, cell, ',');
    table.ids.push_back(std::stoll(cell));
    std::getline(fields, cell, ',');
    if (cell == "source") table.domains.push_back(DomainTag::source);
    else if (cell == "target") table.domains.push_back(DomainTag::target);
    else throw Error(path + ": unknown domain '" + cell + "'");
    std::getline(fields, cell, ',');
    table.labels.push_back(cell.empty() ? std::nullopt : std::optional<int>(std::stoi(cell)));
    std::vector<double> values;
    while (std::getline(fields, cell, ',')) values.push_back(std::stod(cell));
    rows.push_back(std::move(values));
  }
  const Index d = rows.empty() ? 0 : static_cast<Index>(rows.front().size());
  table.features.resize(static_cast<Index>(rows.size()), d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (static_cast<Index>(rows[i].size()) != d) throw Error(path + ": ragged feature rows");
    for (Index j = 0; j < d; ++j) table.features(static_cast<Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
  }
  return table;
}

}  // namespace fuda
