#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tsvat/encoder.hpp"
#include "tsvat/error.hpp"
#include "tsvat/series.hpp"

namespace tsvat::finetune {

struct FinetuneConfig {
  std::vector<Index> window_lengths{17};
  double training_percent = 0.2;
  double valid_percent = 0.3;
  double mask_percent = 0.25;
  bool mix_windows = true;
  Index epochs = 20;
  Index batch_size = 32;
  double learning_rate = 1e-3;
  double momentum = 0.9;
  // Checkpoint on the lowest training loss unless this is set.
  bool checkpoint_on_validation = false;
  std::uint64_t seed = 0;

  /// Throws InvalidConfig. Every window must hold at least two patches so a
  /// mask with one visible and one hidden patch exists.
  void validate(Index patch_len) const;
  /// Stable textual form used for hashing and manifests.
  std::string canonical() const;
};

/// One batch: equally long windows, each with its own mask.
struct Batch {
  Index window_length = 0;
  std::vector<Index> starts;
  std::vector<encoder::MaskSpec> masks;  // empty until masks are assigned
};

// --- mix_windows = false -----------------------------------------------------

struct LengthSplit {
  Index window_length = 0;
  std::vector<Index> train_starts;  // ascending
  std::vector<Index> valid_starts;  // ascending, disjoint from train_starts
};

/// For each window length in order: tile the series with non-overlapping
/// windows and draw disjoint training / validation subsets of sizes
/// floor(training_percent * n) and floor(valid_percent * n).
std::vector<LengthSplit> build_batches_fixed(const ts::TimeSeries& series,
                                             const FinetuneConfig& cfg);

// --- mix_windows = true ------------------------------------------------------

struct Region {
  Index begin = 0;
  Index end = 0;  // exclusive
  Index size() const noexcept { return end - begin; }
};

/// Temporal split: training region first, validation region right after it.
/// Batches walk their region with non-overlapping windows; each batch draws
/// its length uniformly from window_lengths.
struct MixedSchedule {
  Region train;
  Region valid;
  std::vector<Batch> valid_batches;  // cached: reused by every validation pass
};

MixedSchedule build_batches_mixed(const ts::TimeSeries& series, const FinetuneConfig& cfg);

/// Batches covering a region, each with a length drawn from `lengths`.
std::vector<Batch> walk_region(const Region& region, const std::vector<Index>& lengths,
                               Index batch_size, Rng& rng);

// --- schedule used by the training loop -------------------------------------

class BatchSchedule {
 public:
  static BatchSchedule build(const ts::TimeSeries& series, const FinetuneConfig& cfg,
                             Index patch_len);

  /// Cached validation batches with cached masks.
  const std::vector<Batch>& validation() const noexcept { return validation_; }
  /// Cached training batches with cached masks; used to score each epoch.
  const std::vector<Batch>& training_eval() const noexcept { return training_eval_; }
  /// Batches and freshly sampled masks for one epoch of updates.
  std::vector<Batch> training(Index epoch) const;

 private:
  FinetuneConfig cfg_;
  Index patch_len_ = 0;
  std::vector<LengthSplit> fixed_;
  MixedSchedule mixed_;
  std::vector<Batch> validation_;
  std::vector<Batch> training_eval_;
};

/// Mean masked loss over every window of the given batches (masks required).
double evaluate(const encoder::EncoderModel& model, const ts::TimeSeries& series,
                const std::vector<Batch>& batches);

struct RunRecord {
  std::string config_hash;
  double loss_first = 0.0;
  double loss_final = 0.0;
  double improvement_percent = 0.0;
  Index best_epoch = 1;
  double wall_time = 0.0;  // seconds
  std::vector<double> train_curve;
  std::vector<double> valid_curve;
  bool diverged = false;
};

struct FinetuneResult {
  encoder::EncoderModel best_model;
  RunRecord record;
};

class DivergedError : public Error {
 public:
  DivergedError(const std::string& message, RunRecord record)
      : Error(ErrorCode::DivergedLoss, message), record_(std::move(record)) {}
  const RunRecord& record() const noexcept { return record_; }

 private:
  RunRecord record_;
};

using ProgressFn = std::function<void(double)>;

/// Momentum gradient descent on the masked reconstruction loss, keeping the
/// epoch with the lowest checkpoint loss. Throws DivergedError on non-finite loss.
FinetuneResult finetune(const encoder::EncoderModel& model, const ts::TimeSeries& series,
                        const FinetuneConfig& cfg, const ProgressFn& progress = {});

/// (loss_first - loss_final) * 100 / loss_first. Throws ZeroBaseline.
double loss_improvement(double loss_first, double loss_final);

/// {base_window} followed by up to n_windows - 1 dominant sizes in
/// [min_size, max_size] that differ from base_window.
std::vector<Index> select_window_lengths(const ts::TimeSeries& series, Index n_windows,
                                         Index base_window, Index min_size, Index max_size);

}  // namespace tsvat::finetune
