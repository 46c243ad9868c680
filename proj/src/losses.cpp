#include "fuda/losses.hpp"

#include "fuda/banks.hpp"

namespace fuda {

namespace {

Vector log_softmax(const Vector& s) {
  const double m = s.maxCoeff();
  const double lse = m + std::log((s.array() - m).exp().sum());
  return s.array() - lse;
}

// Entropy of softmax(s) and its gradient with respect to s.
double entropy_of_logits(const Vector& s, Vector* d_s) {
  const Vector logq = log_softmax(s);
  const Vector q = logq.array().exp();
  double h = 0.0;
  Vector dh(q.size());
  for (Index k = 0; k < q.size(); ++k) {
    h -= q(k) * std::max(logq(k), std::log(kLogEpsilon));
    dh(k) = detail::entropy_term_derivative(q(k));
  }
  if (d_s) *d_s = q.array() * (dh.array() - q.dot(dh));
  return h;
}

// Cross-entropy of softmax(s) against a hard index, and its gradient in s.
double cluster_ce_of_logits(const Vector& s, int cluster, Vector* d_s) {
  const Vector logq = log_softmax(s);
  const double lp = logq(cluster);
  if (d_s) {
    if (lp >= std::log(kLogEpsilon)) {
      *d_s = logq.array().exp();
      (*d_s)(cluster) -= 1.0;
    } else {
      *d_s = Vector::Zero(s.size());
    }
  }
  return -std::max(lp, std::log(kLogEpsilon));
}

void check_clusters(const std::vector<int>& clusters, Index n, Index k, const char* what) {
  if (static_cast<Index>(clusters.size()) != n)
    throw Error(std::string(what) + ": cluster assignments do not align with features");
  for (int a : clusters)
    if (a < 0 || a >= k) throw Error(std::string(what) + ": cluster index out of range");
}

// Adds one domain's terms; returns the unnormalized sum.
double proto_domain_terms(const Eigen::Ref<const Matrix>& feats, const std::vector<int>& clusters,
                          const Matrix& own, const Matrix& other, double t, Matrix* grad) {
  double sum = 0.0;
  if (grad) *grad = Matrix::Zero(feats.rows(), feats.cols());
  Vector d_own, d_other;
  for (Index i = 0; i < feats.rows(); ++i) {
    const Vector f = feats.row(i).transpose();
    const Vector s_own = own * f / t;
    const Vector s_other = other * f / t;
    sum += cluster_ce_of_logits(s_own, clusters[static_cast<std::size_t>(i)], grad ? &d_own : nullptr);
    sum += entropy_of_logits(s_other, grad ? &d_other : nullptr);
    if (grad) grad->row(i) = ((own.transpose() * d_own + other.transpose() * d_other) / t).transpose();
  }
  return sum;
}

}  // namespace

SelfLoss loss_self_proto(const Eigen::Ref<const Matrix>& source_features,
                         const std::vector<int>& source_clusters,
                         const Eigen::Ref<const Matrix>& target_features,
                         const std::vector<int>& target_clusters, const PrototypeBank& bank,
                         double temperature, bool with_gradient) {
  if (!(temperature > 0.0)) throw Error("loss_self_proto: temperature must be positive");
  if (!bank.populated()) throw Error("loss_self_proto: prototype bank is empty");
  if (source_features.rows() == 0) throw Error("loss_self_proto: empty source domain");
  if (target_features.rows() == 0) throw Error("loss_self_proto: empty target domain");
  const Index k = bank.source_centers.rows();
  check_clusters(source_clusters, source_features.rows(), k, "loss_self_proto source");
  check_clusters(target_clusters, target_features.rows(), bank.target_centers.rows(),
                 "loss_self_proto target");

  SelfLoss out;
  const double total = static_cast<double>(source_features.rows() + target_features.rows());
  out.value = proto_domain_terms(source_features, source_clusters, bank.source_centers,
                                 bank.target_centers, temperature,
                                 with_gradient ? &out.d_source : nullptr);
  out.value += proto_domain_terms(target_features, target_clusters, bank.target_centers,
                                  bank.source_centers, temperature,
                                  with_gradient ? &out.d_target : nullptr);
  out.value /= total;
  if (with_gradient) {
    out.d_source /= total;
    out.d_target /= total;
  }
  return out;
}

Matrix attention_centers(const MemoryBank& bank, const Eigen::Ref<const Matrix>& bank_predictions) {
  if (!bank.populated()) throw Error("attention_centers: memory bank is empty");
  if (bank_predictions.rows() != bank.features.rows())
    throw Error("attention_centers: predictions do not align with the bank");
  require_simplex_rows(bank_predictions, "attention_centers predictions");
  Matrix centers = bank_predictions.transpose() * bank.features;
  for (Index j = 0; j < centers.rows(); ++j) {
    const double norm = centers.row(j).norm();
    if (!(norm > 1e-12))
      throw Error("attention_centers: center of class " + std::to_string(j) + " has zero norm");
    centers.row(j) /= norm;
  }
  return centers;
}

SelfLoss loss_self_simplified(const Eigen::Ref<const Matrix>& centers,
                              const Eigen::Ref<const Matrix>& target_features, double temperature,
                              bool with_gradient) {
  if (!(temperature > 0.0)) throw Error("loss_self_simplified: temperature must be positive");
  if (target_features.rows() == 0) throw Error("loss_self_simplified: empty target batch");
  if (centers.cols() != target_features.cols())
    throw Error("loss_self_simplified: feature dimension mismatch");
  const Index n = target_features.rows();
  SelfLoss out;
  if (with_gradient) out.d_target = Matrix::Zero(n, target_features.cols());
  Vector d_s;
  for (Index i = 0; i < n; ++i) {
    const Vector s = centers * target_features.row(i).transpose() / temperature;
    out.value += entropy_of_logits(s, with_gradient ? &d_s : nullptr);
    if (with_gradient)
      out.d_target.row(i) = (centers.transpose() * d_s / (temperature * double(n))).transpose();
  }
  out.value /= static_cast<double>(n);
  return out;
}

SelfLoss loss_self_simplified(const MemoryBank& bank,
                              const Eigen::Ref<const Matrix>& bank_predictions,
                              const Eigen::Ref<const Matrix>& target_features, double temperature,
                              bool with_gradient) {
  return loss_self_simplified(attention_centers(bank, bank_predictions), target_features,
                              temperature, with_gradient);
}

}  // namespace fuda
