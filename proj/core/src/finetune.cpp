#include "tsvat/finetune.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>

#include "tsvat/hash.hpp"

namespace tsvat::finetune {
namespace {

// Products such as 0.29 * 100 land a hair below the integer they denote.
Index fraction_of(double percent, Index n) {
  return static_cast<Index>(std::floor(percent * static_cast<double>(n) + 1e-9));
}

std::vector<Batch> chunk(Index window_length, const std::vector<Index>& starts, Index batch_size) {
  std::vector<Batch> batches;
  for (std::size_t i = 0; i < starts.size(); i += static_cast<std::size_t>(batch_size)) {
    Batch b;
    b.window_length = window_length;
    const auto end = std::min(starts.size(), i + static_cast<std::size_t>(batch_size));
    b.starts.assign(starts.begin() + static_cast<std::ptrdiff_t>(i),
                    starts.begin() + static_cast<std::ptrdiff_t>(end));
    batches.push_back(std::move(b));
  }
  return batches;
}

void assign_masks(std::vector<Batch>& batches, Index patch_len, double ratio, Rng& rng) {
  for (auto& b : batches) {
    b.masks.clear();
    const Index patches = b.window_length / patch_len;
    for (std::size_t i = 0; i < b.starts.size(); ++i) {
      b.masks.push_back(encoder::sample_mask(patches, ratio, rng));
    }
  }
}

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void FinetuneConfig::validate(Index patch_len) const {
  require(!window_lengths.empty(), ErrorCode::InvalidConfig, "window_lengths must not be empty");
  for (const Index w : window_lengths) {
    require(w >= 2 * patch_len, ErrorCode::InvalidConfig,
            "window length " + std::to_string(w) + " holds fewer than two patches of " +
                std::to_string(patch_len));
  }
  require(training_percent > 0.0 && training_percent < 1.0, ErrorCode::InvalidConfig,
          "training_percent must be in (0, 1)");
  require(valid_percent > 0.0 && valid_percent < 1.0, ErrorCode::InvalidConfig,
          "valid_percent must be in (0, 1)");
  require(training_percent + valid_percent <= 1.0 + 1e-12, ErrorCode::InvalidConfig,
          "training_percent + valid_percent must not exceed 1");
  require(mask_percent > 0.0 && mask_percent < 1.0, ErrorCode::InvalidConfig,
          "mask_percent must be in (0, 1)");
  require(epochs >= 1, ErrorCode::InvalidConfig, "epochs must be positive");
  require(batch_size >= 1, ErrorCode::InvalidConfig, "batch_size must be positive");
  require(learning_rate >= 0.0 && std::isfinite(learning_rate), ErrorCode::InvalidConfig,
          "learning_rate must be a nonnegative real");
  require(momentum >= 0.0 && momentum < 1.0, ErrorCode::InvalidConfig,
          "momentum must be in [0, 1)");
}

std::string FinetuneConfig::canonical() const {
  std::string s = "window_lengths=";
  for (std::size_t i = 0; i < window_lengths.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(window_lengths[i]);
  }
  s += ";training_percent=" + format_real(training_percent);
  s += ";valid_percent=" + format_real(valid_percent);
  s += ";mask_percent=" + format_real(mask_percent);
  s += ";mix_windows=" + std::string(mix_windows ? "true" : "false");
  s += ";epochs=" + std::to_string(epochs);
  s += ";batch_size=" + std::to_string(batch_size);
  s += ";learning_rate=" + format_real(learning_rate);
  s += ";momentum=" + format_real(momentum);
  s += ";checkpoint_on_validation=" + std::string(checkpoint_on_validation ? "true" : "false");
  s += ";seed=" + std::to_string(seed);
  return s;
}

std::vector<LengthSplit> build_batches_fixed(const ts::TimeSeries& series,
                                             const FinetuneConfig& cfg) {
  const Index T = series.length();
  const bool partition = std::abs(cfg.training_percent + cfg.valid_percent - 1.0) < 1e-12;
  const Rng base = Rng(cfg.seed).split("batches.fixed");
  std::vector<LengthSplit> splits;
  for (const Index wlen : cfg.window_lengths) {
    const Index n = T / wlen;
    const Index n_train = fraction_of(cfg.training_percent, n);
    const Index n_valid = partition ? n - n_train : fraction_of(cfg.valid_percent, n);
    require(n_train >= 1 && n_valid >= 1, ErrorCode::NotEnoughWindows,
            "window length " + std::to_string(wlen) + " yields " + std::to_string(n) +
                " windows, too few for the requested split");
    std::vector<Index> order(static_cast<std::size_t>(n));
    for (Index k = 0; k < n; ++k) order[k] = k;
    Rng rng = base.split(static_cast<std::uint64_t>(wlen));
    rng.shuffle(order);
    LengthSplit split;
    split.window_length = wlen;
    for (Index i = 0; i < n_train; ++i) split.train_starts.push_back(order[i] * wlen);
    for (Index i = n_train; i < n_train + n_valid; ++i) split.valid_starts.push_back(order[i] * wlen);
    std::sort(split.train_starts.begin(), split.train_starts.end());
    std::sort(split.valid_starts.begin(), split.valid_starts.end());
    splits.push_back(std::move(split));
  }
  return splits;
}

std::vector<Batch> walk_region(const Region& region, const std::vector<Index>& lengths,
                               Index batch_size, Rng& rng) {
  std::vector<Batch> batches;
  Index cursor = region.begin;
  for (;;) {
    const Index wlen = lengths[static_cast<std::size_t>(rng.below(lengths.size()))];
    const Index count = std::min(batch_size, (region.end - cursor) / wlen);
    if (count < 1) break;
    Batch b;
    b.window_length = wlen;
    for (Index i = 0; i < count; ++i) b.starts.push_back(cursor + i * wlen);
    cursor += count * wlen;
    batches.push_back(std::move(b));
  }
  return batches;
}

MixedSchedule build_batches_mixed(const ts::TimeSeries& series, const FinetuneConfig& cfg) {
  const Index T = series.length();
  const Index longest = *std::max_element(cfg.window_lengths.begin(), cfg.window_lengths.end());
  MixedSchedule s;
  s.train = {0, fraction_of(cfg.training_percent, T)};
  s.valid = {s.train.end, std::min(T, s.train.end + fraction_of(cfg.valid_percent, T))};
  require(s.train.size() >= longest, ErrorCode::RegionTooShort,
          "training region of " + std::to_string(s.train.size()) +
              " steps is shorter than window " + std::to_string(longest));
  require(s.valid.size() >= longest, ErrorCode::RegionTooShort,
          "validation region of " + std::to_string(s.valid.size()) +
              " steps is shorter than window " + std::to_string(longest));
  Rng rng = Rng(cfg.seed).split("batches.mixed.valid");
  s.valid_batches = walk_region(s.valid, cfg.window_lengths, cfg.batch_size, rng);
  return s;
}

BatchSchedule BatchSchedule::build(const ts::TimeSeries& series, const FinetuneConfig& cfg,
                                   Index patch_len) {
  cfg.validate(patch_len);
  BatchSchedule s;
  s.cfg_ = cfg;
  s.patch_len_ = patch_len;
  const Rng base(cfg.seed);
  if (cfg.mix_windows) {
    s.mixed_ = build_batches_mixed(series, cfg);
    s.validation_ = s.mixed_.valid_batches;
    Rng eval_rng = base.split("batches.mixed.train_eval");
    s.training_eval_ = walk_region(s.mixed_.train, cfg.window_lengths, cfg.batch_size, eval_rng);
  } else {
    s.fixed_ = build_batches_fixed(series, cfg);
    for (const auto& split : s.fixed_) {
      for (auto& b : chunk(split.window_length, split.valid_starts, cfg.batch_size)) {
        s.validation_.push_back(std::move(b));
      }
      for (auto& b : chunk(split.window_length, split.train_starts, cfg.batch_size)) {
        s.training_eval_.push_back(std::move(b));
      }
    }
  }
  Rng valid_masks = base.split("masks.valid");
  assign_masks(s.validation_, patch_len, cfg.mask_percent, valid_masks);
  Rng eval_masks = base.split("masks.train_eval");
  assign_masks(s.training_eval_, patch_len, cfg.mask_percent, eval_masks);
  return s;
}

std::vector<Batch> BatchSchedule::training(Index epoch) const {
  const Rng epoch_rng = Rng(cfg_.seed).split("epoch").split(static_cast<std::uint64_t>(epoch));
  std::vector<Batch> batches;
  if (cfg_.mix_windows) {
    Rng rng = epoch_rng.split("lengths");
    batches = walk_region(mixed_.train, cfg_.window_lengths, cfg_.batch_size, rng);
  } else {
    // Lengths are visited in configured order; windows are reshuffled per epoch.
    for (const auto& split : fixed_) {
      auto starts = split.train_starts;
      Rng rng = epoch_rng.split(static_cast<std::uint64_t>(split.window_length));
      rng.shuffle(starts);
      for (auto& b : chunk(split.window_length, starts, cfg_.batch_size)) {
        batches.push_back(std::move(b));
      }
    }
  }
  Rng masks = epoch_rng.split("masks");
  assign_masks(batches, patch_len_, cfg_.mask_percent, masks);
  return batches;
}

double evaluate(const encoder::EncoderModel& model, const ts::TimeSeries& series,
                const std::vector<Batch>& batches) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& b : batches) {
    require(b.masks.size() == b.starts.size(), ErrorCode::NoMaskedPatches,
            "evaluation batches need one mask per window");
    for (std::size_t i = 0; i < b.starts.size(); ++i) {
      const Matrix window = ts::window_values(series, b.starts[i], b.window_length);
      const auto target = encoder::patchify(window, model.config.patch_len);
      sum += encoder::loss_value(model, window, target, &b.masks[i], encoder::Loss::Masked);
      ++count;
    }
  }
  require(count > 0, ErrorCode::NotEnoughWindows, "no windows to evaluate");
  return sum / static_cast<double>(count);
}

double loss_improvement(double loss_first, double loss_final) {
  require(loss_first > 0.0, ErrorCode::ZeroBaseline, "loss_first must be positive");
  return (loss_first - loss_final) * 100.0 / loss_first;
}

FinetuneResult finetune(const encoder::EncoderModel& initial, const ts::TimeSeries& series,
                        const FinetuneConfig& cfg, const ProgressFn& progress) {
  const auto started = std::chrono::steady_clock::now();
  const Index patch_len = initial.config.patch_len;
  const auto schedule = BatchSchedule::build(series, cfg, patch_len);

  RunRecord record;
  record.config_hash = sha256_hex(cfg.canonical());
  encoder::EncoderModel model = initial;
  encoder::Parameters velocity = encoder::Parameters::zeros(model.config);
  encoder::Parameters batch_grad = encoder::Parameters::zeros(model.config);

  const auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  };
  const auto diverge = [&](const std::string& what) {
    record.diverged = true;
    record.wall_time = elapsed();
    throw DivergedError(what, record);
  };

  record.loss_first = evaluate(model, series, schedule.validation());
  if (!std::isfinite(record.loss_first)) diverge("initial validation loss is not finite");

  encoder::EncoderModel best = model;
  double best_score = std::numeric_limits<double>::infinity();
  for (Index epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (const auto& batch : schedule.training(epoch)) {
      batch_grad = encoder::Parameters::zeros(model.config);
      const double scale = 1.0 / static_cast<double>(batch.starts.size());
      for (std::size_t i = 0; i < batch.starts.size(); ++i) {
        const Matrix window = ts::window_values(series, batch.starts[i], batch.window_length);
        const auto g = encoder::gradients(model, window, batch.masks[i]);
        if (!std::isfinite(g.loss)) diverge("training loss became non-finite");
        encoder::add_scaled(batch_grad, g.grads, scale);
      }
      // v <- momentum * v - lr * g;  theta <- theta + v
      encoder::Parameters decayed = encoder::Parameters::zeros(model.config);
      encoder::add_scaled(decayed, velocity, cfg.momentum);
      encoder::add_scaled(decayed, batch_grad, -cfg.learning_rate);
      velocity = std::move(decayed);
      encoder::add_scaled(model.params, velocity, 1.0);
    }
    const double train_loss = evaluate(model, series, schedule.training_eval());
    const double valid_loss = evaluate(model, series, schedule.validation());
    if (!std::isfinite(train_loss) || !std::isfinite(valid_loss)) {
      diverge("epoch " + std::to_string(epoch) + " loss is not finite");
    }
    record.train_curve.push_back(train_loss);
    record.valid_curve.push_back(valid_loss);
    const double score = cfg.checkpoint_on_validation ? valid_loss : train_loss;
    if (score < best_score) {
      best_score = score;
      best = model;
      record.best_epoch = epoch;
    }
    if (progress) progress(static_cast<double>(epoch) / static_cast<double>(cfg.epochs));
  }

  record.loss_final = evaluate(best, series, schedule.validation());
  record.improvement_percent = loss_improvement(record.loss_first, record.loss_final);
  record.wall_time = elapsed();
  return {std::move(best), std::move(record)};
}

std::vector<Index> select_window_lengths(const ts::TimeSeries& series, Index n_windows,
                                         Index base_window, Index min_size, Index max_size) {
  require(n_windows >= 1, ErrorCode::InvalidConfig, "n_windows must be positive");
  std::vector<Index> lengths{base_window};
  if (n_windows == 1) return lengths;
  try {
    const auto dominant = ts::dominant_window_sizes(series, n_windows, min_size, max_size);
    for (const Index w : dominant) {
      if (static_cast<Index>(lengths.size()) == n_windows) break;
      if (w != base_window) lengths.push_back(w);
    }
  } catch (const Error& e) {
    if (e.code() != ErrorCode::NoDominantPeriod) throw;
  }
  return lengths;
}

}  // namespace tsvat::finetune
