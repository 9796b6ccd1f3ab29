#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "tsvat/analysis.hpp"
#include "tsvat/error.hpp"

namespace tsvat::analysis {

void SweepGrid::validate() const {
  require(epochs >= 1, ErrorCode::InvalidConfig, "epochs must be positive");
  require(!dataset_percents.empty() && !mask_percents.empty() && !n_windows_options.empty(),
          ErrorCode::InvalidConfig, "every grid axis needs at least one value");
  for (const double p : dataset_percents) {
    require(p > 0.0 && p + valid_percent <= 1.0 + 1e-12, ErrorCode::InvalidConfig,
            "dataset percent " + std::to_string(p) + " does not fit beside the validation split");
  }
  for (const double m : mask_percents) {
    require(m > 0.0 && m < 1.0, ErrorCode::InvalidConfig, "mask percents must be in (0, 1)");
  }
  for (const Index w : n_windows_options) {
    require(w >= 1, ErrorCode::InvalidConfig, "n_windows options must be positive");
  }
  require(valid_percent > 0.0 && valid_percent < 1.0, ErrorCode::InvalidConfig,
          "valid_percent must be in (0, 1)");
  require(base_window >= 1, ErrorCode::InvalidConfig, "base_window must be positive");
}

std::size_t SweepGrid::cell_count() const noexcept {
  return dataset_percents.size() * mask_percents.size() * n_windows_options.size();
}

std::vector<SweepCell> enumerate_cells(const SweepGrid& grid) {
  std::vector<SweepCell> cells;
  for (const double d : grid.dataset_percents) {
    for (const double m : grid.mask_percents) {
      for (const Index w : grid.n_windows_options) cells.push_back({d, m, w});
    }
  }
  return cells;
}

finetune::FinetuneConfig cell_config(const ts::TimeSeries& series, const SweepGrid& grid,
                                     const SweepCell& cell, Index patch_len) {
  finetune::FinetuneConfig cfg;
  cfg.training_percent = cell.dataset_percent;
  cfg.valid_percent = grid.valid_percent;
  cfg.mask_percent = cell.mask_percent;
  cfg.mix_windows = grid.mix_windows;
  cfg.epochs = grid.epochs;
  cfg.batch_size = grid.batch_size;
  cfg.learning_rate = grid.learning_rate;
  cfg.seed = grid.seed;
  const Index T = series.length();
  const auto region = [&](double p) {
    return static_cast<Index>(std::floor(p * static_cast<double>(T) + 1e-9));
  };
  // Mixed mode needs each window to fit its region; fixed mode needs windows
  // plentiful enough for both samples, which the builder checks.
  const Index max_size =
      std::min({T / 2, region(cell.dataset_percent), region(grid.valid_percent)});
  const Index min_size = std::max<Index>(2, 2 * patch_len);
  if (cell.n_windows == 1 || max_size < min_size) {
    cfg.window_lengths = {grid.base_window};
  } else {
    cfg.window_lengths = finetune::select_window_lengths(series, cell.n_windows, grid.base_window,
                                                         min_size, max_size);
  }
  return cfg;
}

Matrix SweepResult::table() const {
  Index n = 0;
  for (const auto& row : rows) n += row.failed ? 0 : 1;
  Matrix t(n, static_cast<Index>(kSweepColumns.size()));
  Index i = 0;
  for (const auto& row : rows) {
    if (row.failed) continue;
    t(i, 0) = row.record.wall_time;
    t(i, 1) = static_cast<double>(row.record.best_epoch);
    t(i, 2) = row.cell.dataset_percent;
    t(i, 3) = row.cell.mask_percent;
    t(i, 4) = static_cast<double>(row.cell.n_windows);
    t(i, 5) = row.record.improvement_percent;
    ++i;
  }
  return t;
}

std::vector<std::string> SweepResult::column_names() const {
  return {kSweepColumns.begin(), kSweepColumns.end()};
}

SweepResult run_sweep(const ts::TimeSeries& series, const SweepGrid& grid,
                      const encoder::EncoderConfig& model_config, const SweepProgressFn& progress) {
  grid.validate();
  series.validate();
  encoder::EncoderConfig mc = model_config;
  mc.seed = grid.seed;
  const auto initial = encoder::init_model(mc);
  const auto cells = enumerate_cells(grid);
  SweepResult result;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    SweepRow row;
    row.cell = cells[c];
    try {
      const auto cfg = cell_config(series, grid, cells[c], mc.patch_len);
      row.window_lengths = cfg.window_lengths;
      row.record = finetune::finetune(initial, series, cfg).record;
    } catch (const finetune::DivergedError& e) {
      row.failed = true;
      row.error = e.what();
      row.record = e.record();
    } catch (const Error& e) {
      row.failed = true;
      row.error = e.what();
    }
    result.rows.push_back(std::move(row));
    if (progress) progress(c + 1, cells.size());
  }
  return result;
}

void write_sweep_table(std::ostream& out, const SweepResult& result) {
  for (std::size_t c = 0; c < kSweepColumns.size(); ++c) {
    out << (c ? "," : "") << kSweepColumns[c];
  }
  out << '\n';
  const Matrix t = result.table();
  char buf[40];
  for (Index i = 0; i < t.rows(); ++i) {
    for (Index j = 0; j < t.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", t(i, j));
      out << (j ? "," : "") << buf;
    }
    out << '\n';
  }
  require(out.good(), ErrorCode::IoError, "sweep table write failed");
}

}  // namespace tsvat::analysis
