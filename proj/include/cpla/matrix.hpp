#pragma once

#include <Eigen/Dense>

namespace cpla {

/// Sample-major storage: one sample per contiguous row.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace cpla
