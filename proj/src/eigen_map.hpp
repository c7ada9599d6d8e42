// SPDX-License-Identifier: Apache-2.0
#ifndef UOTLAB_SRC_EIGEN_MAP_HPP_
#define UOTLAB_SRC_EIGEN_MAP_HPP_

#include <Eigen/Dense>

#include "uotlab/dense_matrix.hpp"

namespace uotlab {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Eigen::Map<EMat> emap(DenseMatrix& m) {
  return Eigen::Map<EMat>(m.data.data(), m.rows, m.cols);
}

inline Eigen::Map<const EMat> emap(const DenseMatrix& m) {
  return Eigen::Map<const EMat>(m.data.data(), m.rows, m.cols);
}

}  // namespace uotlab

#endif  // UOTLAB_SRC_EIGEN_MAP_HPP_
