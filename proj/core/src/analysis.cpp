#include "tsvat/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "tsvat/error.hpp"
#include "tsvat/rng.hpp"

namespace tsvat::analysis {
namespace {

bool is_constant(const Matrix& table, Index col) {
  const double first = table(0, col);
  for (Index i = 1; i < table.rows(); ++i) {
    if (table(i, col) != first) return false;
  }
  return true;
}

double pearson(const Matrix& table, Index a, Index b) {
  const double ma = table.col(a).mean();
  const double mb = table.col(b).mean();
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (Index i = 0; i < table.rows(); ++i) {
    const double da = table(i, a) - ma;
    const double db = table(i, b) - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

void check_names(const Matrix& table, const std::vector<std::string>& names) {
  require(static_cast<Index>(names.size()) == table.cols(), ErrorCode::ShapeMismatch,
          "expected " + std::to_string(table.cols()) + " column names, got " +
              std::to_string(names.size()));
}

// Mean of the k nearest training rows (excluding the query's own row);
// ties on distance go to the lower row index.
double knn_predict(const Matrix& train, const Vector& target, const RowVector& query, Index self,
                   Index k, std::vector<std::pair<double, Index>>& scratch) {
  scratch.clear();
  for (Index j = 0; j < train.rows(); ++j) {
    if (j == self) continue;
    scratch.emplace_back((train.row(j) - query).squaredNorm(), j);
  }
  const auto kth = scratch.begin() + std::min<Index>(k, static_cast<Index>(scratch.size()));
  std::partial_sort(scratch.begin(), kth, scratch.end());
  double sum = 0.0;
  for (auto it = scratch.begin(); it != kth; ++it) sum += target(it->second);
  return sum / static_cast<double>(kth - scratch.begin());
}

double knn_mse(const Matrix& train, const Matrix& queries, const Vector& target, Index k) {
  std::vector<std::pair<double, Index>> scratch;
  double sum = 0.0;
  for (Index i = 0; i < queries.rows(); ++i) {
    const double e = knn_predict(train, target, queries.row(i), i, k, scratch) - target(i);
    sum += e * e;
  }
  return sum / static_cast<double>(queries.rows());
}

}  // namespace

Correlation correlation_matrix(const Matrix& table, std::vector<std::string> names) {
  check_names(table, names);
  require(table.rows() >= 3, ErrorCode::InsufficientRows,
          "correlation needs at least 3 rows, got " + std::to_string(table.rows()));
  const Index d = table.cols();
  Correlation c;
  c.names = std::move(names);
  c.r = Matrix::Zero(d, d);
  c.constant.resize(static_cast<std::size_t>(d));
  for (Index j = 0; j < d; ++j) c.constant[j] = is_constant(table, j);
  for (Index a = 0; a < d; ++a) {
    if (c.constant[a]) continue;
    c.r(a, a) = 1.0;
    for (Index b = a + 1; b < d; ++b) {
      if (c.constant[b]) continue;
      c.r(a, b) = c.r(b, a) = pearson(table, a, b);
    }
  }
  return c;
}

std::vector<FScore> f_scores(const Matrix& table, const std::vector<std::string>& names,
                             Index target) {
  check_names(table, names);
  require(target >= 0 && target < table.cols(), ErrorCode::IndexOutOfRange, "target column out of range");
  const Index n = table.rows();
  require(n >= 3, ErrorCode::InsufficientRows,
          "f_scores needs at least 3 rows, got " + std::to_string(n));
  require(!is_constant(table, target), ErrorCode::DegenerateTarget, "target column is constant");
  std::vector<FScore> out;
  double total = 0.0;
  for (Index j = 0; j < table.cols(); ++j) {
    if (j == target) continue;
    FScore s;
    s.feature = names[j];
    if (is_constant(table, j)) {
      s.undefined = true;
    } else {
      s.r = pearson(table, j, target);
      const double r2 = s.r * s.r;
      if (r2 >= 1.0) {
        s.perfect = true;
        s.f = std::numeric_limits<double>::infinity();
      } else {
        s.f = r2 / (1.0 - r2) * static_cast<double>(n - 2);
        total += s.f;
      }
    }
    out.push_back(std::move(s));
  }
  if (total > 0.0) {
    for (auto& s : out) {
      if (!s.perfect) s.percent = 100.0 * s.f / total;
    }
  }
  return out;
}

std::vector<Importance> permutation_importance(const Matrix& table,
                                               const std::vector<std::string>& names,
                                               Index target, const PermutationConfig& cfg) {
  check_names(table, names);
  require(target >= 0 && target < table.cols(), ErrorCode::IndexOutOfRange, "target column out of range");
  const Index n = table.rows();
  require(n >= 6, ErrorCode::InsufficientRows,
          "permutation importance needs at least 6 rows, got " + std::to_string(n));
  require(cfg.k >= 1 && cfg.k < n, ErrorCode::InvalidConfig, "k must be in [1, n)");
  require(cfg.repeats >= 1, ErrorCode::InvalidConfig, "repeats must be positive");
  require(!is_constant(table, target), ErrorCode::DegenerateTarget, "target column is constant");

  std::vector<Index> features;
  for (Index j = 0; j < table.cols(); ++j) {
    if (j != target) features.push_back(j);
  }
  Matrix x(n, static_cast<Index>(features.size()));
  for (std::size_t f = 0; f < features.size(); ++f) {
    const auto col = table.col(features[f]);
    const double mean = col.mean();
    const double sd = std::sqrt((col.array() - mean).square().sum() / static_cast<double>(n));
    for (Index i = 0; i < n; ++i) x(i, static_cast<Index>(f)) = sd > 0.0 ? (col(i) - mean) / sd : 0.0;
  }
  const Vector y = table.col(target);
  const double variance = (y.array() - y.mean()).square().sum() / static_cast<double>(n);
  const double baseline = knn_mse(x, x, y, cfg.k);

  std::vector<Importance> out;
  double total = 0.0;
  const Rng base = Rng(cfg.seed).split("permutation");
  for (std::size_t f = 0; f < features.size(); ++f) {
    Rng rng = base.split(static_cast<std::uint64_t>(features[f]));
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    double increase = 0.0;
    Matrix permuted = x;
    for (Index rep = 0; rep < cfg.repeats; ++rep) {
      rng.shuffle(order);
      for (Index i = 0; i < n; ++i) permuted(i, static_cast<Index>(f)) = x(order[i], static_cast<Index>(f));
      increase += knn_mse(x, permuted, y, cfg.k) - baseline;
    }
    Importance imp;
    imp.feature = names[features[f]];
    imp.raw = std::max(0.0, increase / static_cast<double>(cfg.repeats) / variance);
    total += imp.raw;
    out.push_back(std::move(imp));
  }
  if (total > 0.0) {
    for (auto& imp : out) imp.percent = 100.0 * imp.raw / total;
  }
  return out;
}

Index select_epoch_budget(const std::vector<Index>& best_epochs) {
  require(!best_epochs.empty(), ErrorCode::InsufficientRows, "no best epochs to select from");
  std::map<Index, std::size_t> freq;
  for (const Index e : best_epochs) ++freq[e];
  std::vector<std::pair<std::size_t, Index>> ranked;
  for (const auto& [epoch, count] : freq) ranked.emplace_back(count, epoch);
  std::sort(ranked.begin(), ranked.end(), std::greater<>{});
  if (ranked.size() == 1) return ranked[0].second;
  const auto [top_count, top] = ranked[0];
  const auto [second_count, second] = ranked[1];
  if (top_count >= 2 * second_count) return top;
  return std::max(top, second);
}

Index select_epoch_budget(const std::vector<finetune::RunRecord>& records) {
  std::vector<Index> epochs;
  for (const auto& r : records) epochs.push_back(r.best_epoch);
  return select_epoch_budget(epochs);
}

ParallelCoordinates export_parallel_coordinates(const Matrix& table,
                                                const std::vector<std::string>& names,
                                                Index top_n) {
  check_names(table, names);
  require(top_n >= 0 && top_n <= table.rows(), ErrorCode::IndexOutOfRange,
          "top_n " + std::to_string(top_n) + " exceeds " + std::to_string(table.rows()) + " rows");
  std::vector<Index> source;
  for (const auto col : kParallelColumns) {
    const auto it = std::find(names.begin(), names.end(), col);
    require(it != names.end(), ErrorCode::ShapeMismatch, "table lacks column " + std::string(col));
    source.push_back(it - names.begin());
  }
  const Index improvement = source.back();
  std::vector<Index> order(static_cast<std::size_t>(table.rows()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return table(a, improvement) > table(b, improvement);
  });

  ParallelCoordinates pc;
  pc.columns.assign(kParallelColumns.begin(), kParallelColumns.end());
  pc.values.resize(top_n, static_cast<Index>(source.size()));
  for (std::size_t c = 0; c < source.size(); ++c) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (Index i = 0; i < top_n; ++i) {
      lo = std::min(lo, table(order[i], source[c]));
      hi = std::max(hi, table(order[i], source[c]));
    }
    for (Index i = 0; i < top_n; ++i) {
      const double v = table(order[i], source[c]);
      pc.values(i, static_cast<Index>(c)) = hi > lo ? (v - lo) / (hi - lo) : 0.5;
    }
  }
  return pc;
}

ParallelCoordinates export_parallel_coordinates(const SweepResult& result, Index top_n) {
  return export_parallel_coordinates(result.table(), result.column_names(), top_n);
}

Report build_report(const SweepResult& result, const PermutationConfig& cfg) {
  Report report;
  const Matrix table = result.table();
  const auto names = result.column_names();
  const Index target = static_cast<Index>(names.size()) - 1;
  report.rows = static_cast<std::size_t>(table.rows());
  report.failed = result.rows.size() - report.rows;
  std::vector<finetune::RunRecord> records;
  for (const auto& row : result.rows) {
    if (!row.failed) records.push_back(row.record);
  }
  if (!records.empty()) report.epoch_budget = select_epoch_budget(records);
  if (table.rows() >= 3) {
    report.correlation = correlation_matrix(table, names);
    if (!is_constant(table, target)) report.f_scores = f_scores(table, names, target);
  }
  if (table.rows() >= 6 && !is_constant(table, target)) {
    report.importance = permutation_importance(table, names, target, cfg);
  }
  return report;
}

}  // namespace tsvat::analysis
