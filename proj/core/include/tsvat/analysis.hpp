#pragma once

#include <array>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tsvat/encoder.hpp"
#include "tsvat/finetune.hpp"
#include "tsvat/series.hpp"

namespace tsvat::analysis {

// --- sweep -------------------------------------------------------------------

struct SweepGrid {
  Index epochs = 20;
  std::vector<double> dataset_percents{0.15, 0.2, 0.3};
  std::vector<double> mask_percents{0.25, 0.5, 0.75};
  std::vector<Index> n_windows_options{1, 5};
  double valid_percent = 0.3;
  Index base_window = 17;
  bool mix_windows = true;
  Index batch_size = 32;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t cell_count() const noexcept;
};

struct SweepCell {
  double dataset_percent = 0.0;
  double mask_percent = 0.0;
  Index n_windows = 1;
};

/// Cartesian product in lexicographic order: dataset, then mask, then n_windows.
std::vector<SweepCell> enumerate_cells(const SweepGrid& grid);

/// Base window followed by dominant sizes that fit the cell's regions.
finetune::FinetuneConfig cell_config(const ts::TimeSeries& series, const SweepGrid& grid,
                                     const SweepCell& cell, Index patch_len);

struct SweepRow {
  SweepCell cell;
  std::vector<Index> window_lengths;
  finetune::RunRecord record;
  bool failed = false;
  std::string error;
};

inline constexpr std::array<std::string_view, 6> kSweepColumns{
    "time", "best_epoch", "dataset_percent", "masked_percent", "n_windows", "improvement"};

struct SweepResult {
  std::vector<SweepRow> rows;

  /// Successful rows as a table with the kSweepColumns columns.
  Matrix table() const;
  std::vector<std::string> column_names() const;
};

using SweepProgressFn = std::function<void(std::size_t done, std::size_t total)>;

/// Every cell fine-tunes a fresh model initialised from the grid seed. Cell
/// failures are recorded and the sweep carries on.
SweepResult run_sweep(const ts::TimeSeries& series, const SweepGrid& grid,
                      const encoder::EncoderConfig& model_config,
                      const SweepProgressFn& progress = {});

void write_sweep_table(std::ostream& out, const SweepResult& result);

// --- statistics ----------------------------------------------------------------

struct Correlation {
  std::vector<std::string> names;
  Matrix r;                      // 0 where undefined
  std::vector<bool> constant;    // columns whose correlations are undefined

  bool defined(Index i, Index j) const { return !constant[i] && !constant[j]; }
};

/// Pearson correlation of every column pair. Throws InsufficientRows below 3 rows.
Correlation correlation_matrix(const Matrix& table, std::vector<std::string> names);

struct FScore {
  std::string feature;
  double r = 0.0;
  double f = 0.0;           // +inf when |r| = 1
  double percent = 0.0;     // share of the finite F total
  bool perfect = false;     // |r| = 1, excluded from the percentages
  bool undefined = false;   // constant feature
};

/// F = r^2 / (1 - r^2) * (n - 2) for every column except the target.
std::vector<FScore> f_scores(const Matrix& table, const std::vector<std::string>& names,
                             Index target);

struct PermutationConfig {
  Index k = 3;
  Index repeats = 20;
  std::uint64_t seed = 0;
};

struct Importance {
  std::string feature;
  double raw = 0.0;      // mean MSE increase over target variance, clipped at 0
  double percent = 0.0;  // share of the raw total
};

/// Leave-one-out k-nearest-neighbour mean regressor on standardised features.
/// Throws InsufficientRows below 6 rows and DegenerateTarget for a constant target.
std::vector<Importance> permutation_importance(const Matrix& table,
                                               const std::vector<std::string>& names,
                                               Index target, const PermutationConfig& cfg = {});

/// Top frequency returned outright when at least twice the runner-up,
/// otherwise the larger of the two most frequent values.
Index select_epoch_budget(const std::vector<Index>& best_epochs);
Index select_epoch_budget(const std::vector<finetune::RunRecord>& records);

inline constexpr std::array<std::string_view, 5> kParallelColumns{
    "masked_percent", "best_epoch", "n_windows", "dataset_percent", "improvement"};

struct ParallelCoordinates {
  std::vector<std::string> columns;
  Matrix values;  // top_n x 5, each column min-max normalised
};

/// Rows with the highest improvement first (ties keep table order);
/// constant columns map to 0.5.
ParallelCoordinates export_parallel_coordinates(const SweepResult& result, Index top_n);
ParallelCoordinates export_parallel_coordinates(const Matrix& table,
                                                const std::vector<std::string>& names,
                                                Index top_n);

struct Report {
  Correlation correlation;
  std::vector<FScore> f_scores;
  std::vector<Importance> importance;
  std::optional<Index> epoch_budget;
  std::size_t rows = 0;
  std::size_t failed = 0;
};

/// Every statistic that the row count allows, all targeting improvement.
Report build_report(const SweepResult& result, const PermutationConfig& cfg = {});

}  // namespace tsvat::analysis
