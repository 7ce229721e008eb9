#pragma once

// Internal helpers bridging tail::Mat and Eigen dense types. Eigen is used
// for decompositions and solves only; elementwise and matvec paths stay on
// the kernels.

#include "tail/matrix.hpp"

#include <Eigen/Dense>

namespace tail {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Eigen::Map<const EMat> emap(const Mat& m) {
  return Eigen::Map<const EMat>(m.data(), m.rows(), m.cols());
}

inline Mat from_eigen(const Eigen::Ref<const EMat>& e) {
  Mat m(e.rows(), e.cols());
  Eigen::Map<EMat>(m.data(), m.rows(), m.cols()) = e;
  return m;
}

} // namespace tail
