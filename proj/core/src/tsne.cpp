#include "tsvat/tsne.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

#include "tsvat/error.hpp"
#include "tsvat/rng.hpp"

namespace tsvat::projection {
namespace {

constexpr double kPerplexityTolerance = 1e-3;

// Rows are split into contiguous chunks; every row's output depends only on
// that row, so the thread count never changes results.
template <class Fn>
void parallel_rows(Index n, unsigned threads, Fn&& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<Index>(threads, std::max<Index>(1, n / 64)));
  if (threads <= 1) {
    fn(Index{0}, n);
    return;
  }
  std::vector<std::thread> pool;
  const Index chunk = (n + threads - 1) / threads;
  for (unsigned t = 0; t < threads; ++t) {
    const Index begin = std::min(n, t * chunk);
    const Index end = std::min(n, begin + chunk);
    pool.emplace_back([&fn, begin, end] { fn(begin, end); });
  }
  for (auto& th : pool) th.join();
}

Vector squared_distances_from(const Matrix& x, Index i) {
  Vector d(x.rows());
  for (Index j = 0; j < x.rows(); ++j) d(j) = (x.row(i) - x.row(j)).squaredNorm();
  return d;
}

struct RowFit {
  double beta;
  double perplexity;
};

// Fills p (length n) with the conditional distribution of row i.
RowFit calibrate_row(const Vector& dist, Index self, double target, Eigen::Ref<Vector> p) {
  const Index n = dist.size();
  double dmin = std::numeric_limits<double>::infinity();
  double dsum = 0.0;
  for (Index j = 0; j < n; ++j) {
    if (j == self) continue;
    dmin = std::min(dmin, dist(j));
    dsum += dist(j);
  }
  const double spread = dsum / static_cast<double>(n - 1) - dmin;
  double beta = spread > 0.0 ? 1.0 / spread : 1.0;
  double lo = 0.0;
  double hi = std::numeric_limits<double>::infinity();
  const double log_target = std::log(target);
  double perp = 0.0;
  for (int iter = 0; iter < 256; ++iter) {
    double z = 0.0;
    double weighted = 0.0;
    for (Index j = 0; j < n; ++j) {
      if (j == self) {
        p(j) = 0.0;
        continue;
      }
      p(j) = std::exp(-beta * (dist(j) - dmin));
      z += p(j);
      weighted += p(j) * (dist(j) - dmin);
    }
    const double entropy = std::log(z) + beta * weighted / z;
    perp = std::exp(entropy);
    p /= z;
    if (std::abs(perp - target) < 1e-2 * kPerplexityTolerance) break;
    if (entropy > log_target) {
      lo = beta;
      beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
    } else {
      hi = beta;
      beta = lo == 0.0 ? beta * 0.5 : 0.5 * (beta + lo);
    }
  }
  return {beta, perp};
}

}  // namespace

void TsneConfig::validate(Index n) const {
  require(n >= 10, ErrorCode::DegenerateInput, "t-SNE needs at least 10 points");
  require(perplexity >= 3.0 && perplexity <= static_cast<double>(n - 1) / 3.0,
          ErrorCode::PerplexityInfeasible,
          "perplexity " + std::to_string(perplexity) + " outside [3, (n - 1) / 3] for n=" +
              std::to_string(n));
  require(iterations >= 1, ErrorCode::InvalidConfig, "iterations must be positive");
  require(learning_rate > 0.0, ErrorCode::InvalidConfig, "learning_rate must be positive");
  require(kl_every >= 1, ErrorCode::InvalidConfig, "kl_every must be positive");
}

Affinities conditional_affinities(const Matrix& x, double perplexity) {
  const Index n = x.rows();
  require(n >= 2, ErrorCode::DegenerateInput, "affinities need at least two points");
  require(x.allFinite(), ErrorCode::DegenerateInput, "t-SNE input has non-finite entries");
  Affinities a;
  a.conditional.resize(n, n);
  a.achieved_perplexity.resize(n);
  a.beta.resize(n);
  Vector row(n);
  for (Index i = 0; i < n; ++i) {
    const Vector dist = squared_distances_from(x, i);
    const RowFit fit = calibrate_row(dist, i, perplexity, row);
    require(std::abs(fit.perplexity - perplexity) <= kPerplexityTolerance,
            ErrorCode::PerplexityInfeasible,
            "point " + std::to_string(i) + " reaches perplexity " +
                std::to_string(fit.perplexity) + ", not " + std::to_string(perplexity));
    a.conditional.row(i) = row.transpose();
    a.achieved_perplexity(i) = fit.perplexity;
    a.beta(i) = fit.beta;
  }
  return a;
}

Matrix joint_affinities(Matrix p) {
  const Index n = p.rows();
  const double scale = 1.0 / (2.0 * static_cast<double>(n));
  for (Index i = 0; i < n; ++i) {
    p(i, i) = 0.0;
    for (Index j = i + 1; j < n; ++j) {
      const double v = (p(i, j) + p(j, i)) * scale;
      p(i, j) = v;
      p(j, i) = v;
    }
  }
  return p;
}

double kl_divergence(const Matrix& joint, const Matrix& y) {
  const Index n = y.rows();
  double z = 0.0;
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      if (j != i) z += 1.0 / (1.0 + (y.row(i) - y.row(j)).squaredNorm());
    }
  }
  double kl = 0.0;
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      const double p = joint(i, j);
      if (j == i || p <= 0.0) continue;
      const double q = 1.0 / (1.0 + (y.row(i) - y.row(j)).squaredNorm()) / z;
      kl += p * std::log(p / q);
    }
  }
  return kl;
}

TsneResult tsne(const Matrix& x, const TsneConfig& cfg) {
  const Index n = x.rows();
  cfg.validate(n);
  auto aff = conditional_affinities(x, cfg.perplexity);
  TsneResult result;
  result.achieved_perplexity = std::move(aff.achieved_perplexity);
  const Matrix joint = joint_affinities(std::move(aff.conditional));

  Rng rng = Rng(cfg.seed).split("tsne.init");
  Matrix y(n, 2);
  for (Index i = 0; i < y.size(); ++i) y.data()[i] = 1e-4 * rng.normal();
  Matrix update = Matrix::Zero(n, 2);
  Matrix gains = Matrix::Ones(n, 2);
  Matrix attract(n, 2);
  Matrix repulse(n, 2);
  Vector row_z(n);

  const Index exaggerated = cfg.iterations / 4;
  for (Index it = 0; it < cfg.iterations; ++it) {
    const double exaggeration = it < exaggerated ? cfg.early_exaggeration : 1.0;
    const double momentum = it < exaggerated ? cfg.initial_momentum : cfg.final_momentum;
    parallel_rows(n, cfg.threads, [&](Index begin, Index end) {
      for (Index i = begin; i < end; ++i) {
        double ax = 0.0, ay = 0.0, rx = 0.0, ry = 0.0, z = 0.0;
        const double yi0 = y(i, 0);
        const double yi1 = y(i, 1);
        for (Index j = 0; j < n; ++j) {
          if (j == i) continue;
          const double dx = yi0 - y(j, 0);
          const double dy = yi1 - y(j, 1);
          const double num = 1.0 / (1.0 + dx * dx + dy * dy);
          z += num;
          const double pw = joint(i, j) * num;
          ax += pw * dx;
          ay += pw * dy;
          const double qw = num * num;
          rx += qw * dx;
          ry += qw * dy;
        }
        attract(i, 0) = ax;
        attract(i, 1) = ay;
        repulse(i, 0) = rx;
        repulse(i, 1) = ry;
        row_z(i) = z;
      }
    });
    double z = 0.0;
    for (Index i = 0; i < n; ++i) z += row_z(i);
    for (Index i = 0; i < n; ++i) {
      for (Index c = 0; c < 2; ++c) {
        const double grad = 4.0 * (exaggeration * attract(i, c) - repulse(i, c) / z);
        double& g = gains(i, c);
        g = (grad > 0.0) != (update(i, c) > 0.0) ? g + 0.2 : g * 0.8;
        g = std::max(g, 0.01);
        update(i, c) = momentum * update(i, c) - cfg.learning_rate * g * grad;
        y(i, c) += update(i, c);
      }
    }
    y.rowwise() -= y.colwise().mean();
    const Index done = it + 1;
    if (done % cfg.kl_every == 0 || done == cfg.iterations) {
      result.kl_history.emplace_back(done, kl_divergence(joint, y));
    }
  }
  require(y.allFinite(), ErrorCode::DivergedLoss, "t-SNE coordinates became non-finite");
  result.coords = std::move(y);
  return result;
}

}  // namespace tsvat::projection
