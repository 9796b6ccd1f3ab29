#include "tsvat/pca.hpp"

#include <Eigen/Eigenvalues>

#include "tsvat/error.hpp"

namespace tsvat::projection {

PcaResult pca(const Matrix& x, Index k) {
  const Index n = x.rows();
  const Index d = x.cols();
  require(n >= 2, ErrorCode::DegenerateInput, "pca needs at least two rows");
  require(x.allFinite(), ErrorCode::DegenerateInput, "pca input has non-finite entries");
  require(k >= 1 && k <= std::min(n - 1, d), ErrorCode::InvalidConfig,
          "pca k=" + std::to_string(k) + " must be in [1, min(n - 1, D)]");

  PcaResult r;
  r.mean = x.colwise().mean();
  const Matrix centered = x.rowwise() - r.mean;
  const Eigen::MatrixXd cov =
      (centered.transpose() * centered) / static_cast<double>(n - 1);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  require(es.info() == Eigen::Success, ErrorCode::DegenerateInput, "eigendecomposition failed");

  // Eigen returns ascending eigenvalues.
  r.components.resize(k, d);
  r.explained_variance.resize(k);
  for (Index i = 0; i < k; ++i) {
    const Index src = d - 1 - i;
    Eigen::VectorXd v = es.eigenvectors().col(src);
    Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    r.components.row(i) = v.transpose();
    r.explained_variance(i) = std::max(0.0, es.eigenvalues()(src));
  }
  r.coords = centered * r.components.transpose();
  return r;
}

}  // namespace tsvat::projection
