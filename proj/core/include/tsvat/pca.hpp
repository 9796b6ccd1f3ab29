#pragma once

#include "tsvat/types.hpp"

namespace tsvat::projection {

struct PcaResult {
  Matrix coords;                // n x k
  Matrix components;            // k x D, orthonormal rows
  Vector explained_variance;    // k, non-increasing
  RowVector mean;               // 1 x D
};

/// Principal components of the sample covariance (n - 1 denominator).
/// Each component is signed so its largest-magnitude entry is positive.
/// Throws DegenerateInput if n < 2 and InvalidConfig unless 1 <= k <= min(n - 1, D).
PcaResult pca(const Matrix& x, Index k);

}  // namespace tsvat::projection
