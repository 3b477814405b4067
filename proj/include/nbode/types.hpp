#pragma once

#include <Eigen/Dense>

namespace nbode {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
// Batches of states: one state per row, rows contiguous in memory.
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace nbode
