#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "tsvat/types.hpp"

namespace tsvat::projection {

struct TsneConfig {
  double perplexity = 30.0;
  Index iterations = 1000;
  std::uint64_t seed = 0;
  double learning_rate = 200.0;
  double early_exaggeration = 12.0;
  double initial_momentum = 0.5;
  double final_momentum = 0.8;
  Index kl_every = 10;  // KL(P||Q) is recorded at multiples of this and at the last iteration
  unsigned threads = 0;  // 0: hardware concurrency; results do not depend on it

  void validate(Index n) const;
};

struct Affinities {
  Matrix conditional;           // row i holds p_{j|i}; rows sum to 1
  Vector achieved_perplexity;
  Vector beta;                  // 1 / (2 sigma_i^2)
};

/// Per-point Gaussian bandwidths found by bisection so exp(H(P_i)) matches the
/// target within 1e-3. Throws PerplexityInfeasible.
Affinities conditional_affinities(const Matrix& x, double perplexity);

/// (P + P^T) / 2n from conditional affinities; sums to 1.
Matrix joint_affinities(Matrix conditional);

struct TsneResult {
  Matrix coords;  // n x 2
  Vector achieved_perplexity;
  std::vector<std::pair<Index, double>> kl_history;  // (iteration, KL) with 1-based iterations
};

/// Exact t-SNE. Deterministic per seed.
TsneResult tsne(const Matrix& x, const TsneConfig& cfg);

/// KL(P || Q) for a joint affinity matrix and 2D coordinates.
double kl_divergence(const Matrix& joint, const Matrix& coords);

}  // namespace tsvat::projection
