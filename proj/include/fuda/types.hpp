#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace fuda {

using Index = Eigen::Index;

// Sample-major dense storage: one row per sample.
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;
using RowVector = RowVectorX<double>;
using IndexList = std::vector<Index>;

/// Probability floor used inside every logarithm.
inline constexpr double kLogEpsilon = 1e-12;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fuda
