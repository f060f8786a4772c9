#pragma once

#include <Eigen/Core>

namespace multiflock {

/// Dense row-major float64 matrix used for every numeric block in the library.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Exact equality that also tolerates differing shapes.
inline bool same_matrix(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && (a.size() == 0 || a == b);
}

}  // namespace multiflock
