#pragma once

#include "fuda/types.hpp"

#include <algorithm>
#include <cstdint>
#include <random>

namespace fuda {

using Rng = std::mt19937_64;

/// Purpose-separated random streams. Each purpose draws from its own engine so
/// that consuming one stream never perturbs another.
enum class Stream : std::uint32_t {
  data = 1,
  split = 2,
  init = 3,
  beta = 4,
  pairing = 5,
  batches = 6,
  kmeans = 7,
};

inline Rng make_rng(std::uint64_t seed, Stream stream, std::uint32_t salt = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), salt};
  return Rng(seq);
}

/// Beta(a, b) via the ratio of two gamma draws.
inline double sample_beta(double a, double b, Rng& rng) {
  std::gamma_distribution<double> ga(a, 1.0);
  std::gamma_distribution<double> gb(b, 1.0);
  const double x = ga(rng);
  const double y = gb(rng);
  if (x + y <= 0.0) return 0.5;
  return x / (x + y);
}

inline Index uniform_index(Index n, Rng& rng) {
  std::uniform_int_distribution<Index> dist(0, n - 1);
  return dist(rng);
}

inline IndexList random_permutation(Index n, Rng& rng) {
  IndexList perm(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  return perm;
}

}  // namespace fuda
