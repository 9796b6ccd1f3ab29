#pragma once

#include <Eigen/Core>

namespace tsvat {

using Index = Eigen::Index;

// Row-major so that a T x C series stores one timestep per contiguous row and
// matrices can be streamed directly as row-major little-endian payloads.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;
using Vector = Eigen::VectorXd;

}  // namespace tsvat
