#include "fuda/banks.hpp"

#include "fuda/random.hpp"

#include <algorithm>
#include <limits>
#include <tuple>

namespace fuda {

Matrix normalize_rows(const Eigen::Ref<const Matrix>& m) {
  Matrix out = m;
  for (Index r = 0; r < out.rows(); ++r) {
    const double norm = out.row(r).norm();
    if (!(norm > 1e-12)) throw Error("normalize_rows: row " + std::to_string(r) + " has zero norm");
    out.row(r) /= norm;
  }
  return out;
}

namespace {

struct Partition {
  Matrix means;
  std::vector<int> assignments;
  double inertia = 0.0;
};

int nearest(const Eigen::Ref<const RowVector>& x, const Matrix& centers, double* dist2 = nullptr) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Index j = 0; j < centers.rows(); ++j) {
    const double d = (centers.row(j) - x).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(j);
    }
  }
  if (dist2) *dist2 = best_d;
  return best;
}

Matrix seed_plus_plus(const Eigen::Ref<const Matrix>& x, int k, Rng& rng) {
  const Index n = x.rows();
  Matrix centers(k, x.cols());
  centers.row(0) = x.row(uniform_index(n, rng));
  Vector d2(n);
  for (Index i = 0; i < n; ++i) d2(i) = (x.row(i) - centers.row(0)).squaredNorm();
  for (int j = 1; j < k; ++j) {
    const double total = d2.sum();
    Index pick = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double target = u(rng);
      for (pick = 0; pick < n - 1; ++pick) {
        target -= d2(pick);
        if (target < 0.0) break;
      }
    } else {
      pick = uniform_index(n, rng);
    }
    centers.row(j) = x.row(pick);
    for (Index i = 0; i < n; ++i) d2(i) = std::min(d2(i), (x.row(i) - centers.row(j)).squaredNorm());
  }
  return centers;
}

Partition lloyd(const Eigen::Ref<const Matrix>& x, Matrix centers, int max_iterations) {
  const Index n = x.rows();
  const int k = static_cast<int>(centers.rows());
  std::vector<int> assign(static_cast<std::size_t>(n), -1);
  for (int it = 0; it < max_iterations; ++it) {
    bool changed = false;
    for (Index i = 0; i < n; ++i) {
      const int a = nearest(x.row(i), centers);
      if (a != assign[static_cast<std::size_t>(i)]) {
        assign[static_cast<std::size_t>(i)] = a;
        changed = true;
      }
    }
    // An emptied cluster takes the point farthest from its current center.
    std::vector<Index> counts(static_cast<std::size_t>(k), 0);
    for (int a : assign) ++counts[static_cast<std::size_t>(a)];
    for (int j = 0; j < k; ++j) {
      if (counts[static_cast<std::size_t>(j)] > 0) continue;
      Index far = 0;
      double far_d = -1.0;
      for (Index i = 0; i < n; ++i) {
        const int a = assign[static_cast<std::size_t>(i)];
        if (counts[static_cast<std::size_t>(a)] < 2) continue;
        const double d = (x.row(i) - centers.row(a)).squaredNorm();
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      --counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(far)])];
      assign[static_cast<std::size_t>(far)] = j;
      ++counts[static_cast<std::size_t>(j)];
      changed = true;
    }
    centers.setZero();
    for (Index i = 0; i < n; ++i) centers.row(assign[static_cast<std::size_t>(i)]) += x.row(i);
    for (int j = 0; j < k; ++j) centers.row(j) /= static_cast<double>(counts[static_cast<std::size_t>(j)]);
    if (!changed) break;
  }
  Partition p;
  p.means = std::move(centers);
  p.assignments = std::move(assign);
  for (Index i = 0; i < n; ++i)
    p.inertia += (x.row(i) - p.means.row(p.assignments[static_cast<std::size_t>(i)])).squaredNorm();
  return p;
}

}  // namespace

KMeansResult kmeans_prototypes(const Eigen::Ref<const Matrix>& features, int k, std::uint64_t seed,
                               int restarts, int max_iterations) {
  if (k < 1) throw Error("kmeans: cluster count must be positive");
  if (features.rows() < k)
    throw Error("kmeans: " + std::to_string(features.rows()) + " points cannot form " +
                std::to_string(k) + " clusters");
  Rng rng = make_rng(seed, Stream::kmeans);
  Partition best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < std::max(1, restarts); ++r) {
    Partition p = lloyd(features, seed_plus_plus(features, k, rng), max_iterations);
    if (p.inertia < best.inertia - 1e-12) best = std::move(p);
  }
  KMeansResult result;
  result.centers = normalize_rows(best.means);
  result.assignments = std::move(best.assignments);
  result.inertia = best.inertia;
  return result;
}

std::vector<int> match_centers(const Eigen::Ref<const Matrix>& old_centers,
                               const Eigen::Ref<const Matrix>& new_centers) {
  if (old_centers.rows() != new_centers.rows() || old_centers.cols() != new_centers.cols())
    throw Error("match_centers: shape mismatch");
  const Index k = old_centers.rows();
  const Matrix sim = new_centers * old_centers.transpose();
  std::vector<std::tuple<double, Index, Index>> pairs;
  pairs.reserve(static_cast<std::size_t>(k * k));
  for (Index j = 0; j < k; ++j)
    for (Index i = 0; i < k; ++i) pairs.emplace_back(sim(j, i), j, i);
  std::stable_sort(pairs.begin(), pairs.end(),
                   [](const auto& a, const auto& b) { return std::get<0>(a) > std::get<0>(b); });
  std::vector<int> slot(static_cast<std::size_t>(k), -1);
  std::vector<char> taken(static_cast<std::size_t>(k), 0);
  for (const auto& [s, j, i] : pairs) {
    if (slot[static_cast<std::size_t>(j)] >= 0 || taken[static_cast<std::size_t>(i)]) continue;
    slot[static_cast<std::size_t>(j)] = static_cast<int>(i);
    taken[static_cast<std::size_t>(i)] = 1;
  }
  return slot;
}

std::vector<int> blend_centers(Matrix& centers, const Eigen::Ref<const Matrix>& new_centers,
                               double momentum) {
  if (!(momentum >= 0.0 && momentum <= 1.0)) throw Error("center momentum must lie in [0, 1]");
  const std::vector<int> slot = match_centers(centers, new_centers);
  for (Index j = 0; j < new_centers.rows(); ++j) {
    const Index s = slot[static_cast<std::size_t>(j)];
    RowVector blended = momentum * centers.row(s) + (1.0 - momentum) * new_centers.row(j);
    const double norm = blended.norm();
    centers.row(s) = norm > 1e-12 ? RowVector(blended / norm) : new_centers.row(j).normalized();
  }
  return slot;
}

PrototypeBank update_centers(PrototypeBank bank, const KMeansResult& source,
                             const KMeansResult& target) {
  auto update = [&](Matrix& centers, std::vector<int>& clusters, const KMeansResult& fresh) {
    if (centers.rows() == 0) {
      centers = normalize_rows(fresh.centers);
      clusters = fresh.assignments;
      return;
    }
    const std::vector<int> slot = blend_centers(centers, fresh.centers, bank.momentum);
    clusters.resize(fresh.assignments.size());
    for (std::size_t i = 0; i < clusters.size(); ++i)
      clusters[i] = slot[static_cast<std::size_t>(fresh.assignments[i])];
  };
  update(bank.source_centers, bank.source_clusters, source);
  update(bank.target_centers, bank.target_clusters, target);
  return bank;
}

MemoryBank update_memory_bank(MemoryBank bank, const Eigen::Ref<const Matrix>& fresh) {
  if (!(bank.momentum >= 0.0 && bank.momentum <= 1.0)) throw Error("bank momentum must lie in [0, 1]");
  if (!bank.populated()) {
    bank.features = normalize_rows(fresh);
    return bank;
  }
  if (bank.features.rows() != fresh.rows() || bank.features.cols() != fresh.cols())
    throw Error("update_memory_bank: fresh features do not align with the bank");
  for (Index r = 0; r < fresh.rows(); ++r) {
    RowVector blended = bank.momentum * bank.features.row(r) + (1.0 - bank.momentum) * fresh.row(r);
    const double norm = blended.norm();
    bank.features.row(r) = norm > 1e-12 ? RowVector(blended / norm) : fresh.row(r).normalized();
  }
  return bank;
}

}  // namespace fuda
