#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

namespace tdm {

using Index = Eigen::Index;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

// Everything numeric in the library runs in double precision; the finite
// difference checks rely on it.
using Matrix = MatrixX<double>;
using Vector = VectorX<double>;
using RowVector = RowVectorX<double>;

// 1 = missing, 0 = observed.
using FlagMatrix = MatrixX<std::uint8_t>;

using IndexList = std::vector<Index>;

}  // namespace tdm
