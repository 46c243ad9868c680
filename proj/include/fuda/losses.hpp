#pragma once

// Scalar training objectives. Every loss is a mean over its sample set and
// clips probabilities to [kLogEpsilon, 1] inside logarithms. Losses that feed
// training optionally write their gradient with respect to their input.

#include "fuda/types.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace fuda {

namespace detail {

template <typename Scalar>
Scalar clipped_log(Scalar p) {
  return std::log(std::max(p, Scalar(kLogEpsilon)));
}

// d/dp of -p * log(max(p, eps)).
template <typename Scalar>
Scalar entropy_term_derivative(Scalar p) {
  return p >= Scalar(kLogEpsilon) ? -(std::log(p) + Scalar(1)) : -std::log(Scalar(kLogEpsilon));
}

}  // namespace detail

/// Throws unless every row of `p` lies on the probability simplex within `tol`.
template <typename Derived>
void require_simplex_rows(const Eigen::MatrixBase<Derived>& p, const char* what,
                          double tol = 1e-6) {
  for (Index r = 0; r < p.rows(); ++r) {
    const double sum = static_cast<double>(p.row(r).sum());
    const double lo = static_cast<double>(p.row(r).minCoeff());
    if (!(std::abs(sum - 1.0) <= tol) || !(lo >= -tol))
      throw Error(std::string(what) + ": row " + std::to_string(r) + " is not a probability vector");
  }
}

/// Shannon entropy -sum p ln p of a probability vector; 0 ln 0 counts as 0.
template <typename Derived>
typename Derived::Scalar entropy(const Eigen::MatrixBase<Derived>& p) {
  using Scalar = typename Derived::Scalar;
  if (p.size() == 0) throw Error("entropy: empty distribution");
  if (!(std::abs(static_cast<double>(p.sum()) - 1.0) <= 1e-6) ||
      !(static_cast<double>(p.minCoeff()) >= -1e-6))
    throw Error("entropy: input is not a probability vector");
  Scalar h = 0;
  for (Index k = 0; k < p.size(); ++k) {
    const Scalar pk = p(k);
    if (pk > Scalar(0)) h -= pk * detail::clipped_log(pk);
  }
  return h;
}

/// Entropy of every row.
template <typename Derived>
VectorX<typename Derived::Scalar> row_entropies(const Eigen::MatrixBase<Derived>& p) {
  VectorX<typename Derived::Scalar> h(p.rows());
  for (Index r = 0; r < p.rows(); ++r) h(r) = entropy(p.row(r));
  return h;
}

/// Mean labeled cross-entropy -ln p_y.
template <typename Derived>
typename Derived::Scalar loss_cls(const Eigen::MatrixBase<Derived>& p, const std::vector<int>& labels,
                                  MatrixX<typename Derived::Scalar>* d_p = nullptr) {
  using Scalar = typename Derived::Scalar;
  const Index n = p.rows();
  if (n == 0) throw Error("loss_cls: empty batch");
  if (static_cast<Index>(labels.size()) != n) throw Error("loss_cls: every sample needs a label");
  if (d_p) *d_p = MatrixX<Scalar>::Zero(n, p.cols());
  Scalar total = 0;
  for (Index i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= p.cols()) throw Error("loss_cls: label out of range");
    const Scalar py = p(i, y);
    total -= detail::clipped_log(py);
    if (d_p && py >= Scalar(kLogEpsilon)) (*d_p)(i, y) = -Scalar(1) / (py * Scalar(n));
  }
  return total / Scalar(n);
}

/// Mutual-information objective: -H(mean row) + mean row entropy. Lies in [-ln c, 0].
template <typename Derived>
typename Derived::Scalar loss_mi(const Eigen::MatrixBase<Derived>& p,
                                 MatrixX<typename Derived::Scalar>* d_p = nullptr) {
  using Scalar = typename Derived::Scalar;
  const Index n = p.rows();
  if (n == 0) throw Error("loss_mi: empty batch");
  require_simplex_rows(p, "loss_mi");
  const VectorX<Scalar> mean = p.colwise().mean().transpose();
  Scalar value = -entropy(mean);
  for (Index i = 0; i < n; ++i) value += entropy(p.row(i)) / Scalar(n);
  if (d_p) {
    d_p->resize(n, p.cols());
    for (Index i = 0; i < n; ++i)
      for (Index k = 0; k < p.cols(); ++k)
        (*d_p)(i, k) = (detail::entropy_term_derivative(p(i, k)) -
                        detail::entropy_term_derivative(mean(k))) /
                       Scalar(n);
  }
  return value;
}

/// Mean cross-entropy against soft labels: mean_i -sum_k y_ik ln p_ik.
template <typename DerivedP, typename DerivedY>
typename DerivedP::Scalar soft_cross_entropy(const Eigen::MatrixBase<DerivedP>& p,
                                             const Eigen::MatrixBase<DerivedY>& y,
                                             MatrixX<typename DerivedP::Scalar>* d_p = nullptr) {
  using Scalar = typename DerivedP::Scalar;
  const Index n = p.rows();
  if (n == 0) throw Error("soft_cross_entropy: empty batch");
  if (y.rows() != n || y.cols() != p.cols()) throw Error("soft_cross_entropy: shape mismatch");
  require_simplex_rows(y, "soft_cross_entropy labels");
  if (d_p) *d_p = MatrixX<Scalar>::Zero(n, p.cols());
  Scalar total = 0;
  for (Index i = 0; i < n; ++i)
    for (Index k = 0; k < p.cols(); ++k) {
      const Scalar yk = y(i, k);
      if (yk == Scalar(0)) continue;
      total -= yk * detail::clipped_log(p(i, k));
      if (d_p && p(i, k) >= Scalar(kLogEpsilon)) (*d_p)(i, k) = -yk / (p(i, k) * Scalar(n));
    }
  return total / Scalar(n);
}

/// Softmax of center similarities: P_j = exp(mu_j . f / t) / sum_k exp(mu_k . f / t).
template <typename DerivedF, typename DerivedC>
VectorX<typename DerivedF::Scalar> similarity_distribution(const Eigen::MatrixBase<DerivedF>& feature,
                                                           const Eigen::MatrixBase<DerivedC>& centers,
                                                           double temperature) {
  using Scalar = typename DerivedF::Scalar;
  if (!(temperature > 0.0)) throw Error("similarity_distribution: temperature must be positive");
  if (centers.cols() != feature.size()) throw Error("similarity_distribution: dimension mismatch");
  VectorX<Scalar> s = (centers * feature.derived().reshaped()) / Scalar(temperature);
  s.array() -= s.maxCoeff();
  s = s.array().exp();
  return s / s.sum();
}

// ---------------------------------------------------------------------------
// Prototypical self-supervision (double precision; defined in losses.cpp)

struct PrototypeBank;
struct MemoryBank;

/// Value and feature gradients of a self-supervision loss.
struct SelfLoss {
  double value = 0.0;
  Matrix d_source;  ///< dL/d(source features); empty when no source term exists
  Matrix d_target;  ///< dL/d(target features)
};

/// Per-sample cluster cross-entropy plus cross-domain entropy, for both domains,
/// averaged over all source and target samples together.
SelfLoss loss_self_proto(const Eigen::Ref<const Matrix>& source_features,
                         const std::vector<int>& source_clusters,
                         const Eigen::Ref<const Matrix>& target_features,
                         const std::vector<int>& target_clusters, const PrototypeBank& bank,
                         double temperature, bool with_gradient = true);

/// Attention-weighted source centers from a memory bank: row j is the L2-normalized
/// sum over bank rows weighted by each row's class-j probability.
Matrix attention_centers(const MemoryBank& bank, const Eigen::Ref<const Matrix>& bank_predictions);

/// Mean entropy of target similarity distributions over the attention centers.
SelfLoss loss_self_simplified(const MemoryBank& bank,
                              const Eigen::Ref<const Matrix>& bank_predictions,
                              const Eigen::Ref<const Matrix>& target_features, double temperature,
                              bool with_gradient = true);

/// Same objective with centers computed ahead of time.
SelfLoss loss_self_simplified(const Eigen::Ref<const Matrix>& centers,
                              const Eigen::Ref<const Matrix>& target_features, double temperature,
                              bool with_gradient = true);

}  // namespace fuda
