#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "test_support.hpp"
#include "tsvat/finetune.hpp"
#include "tsvat/synth.hpp"

using namespace tsvat;
using namespace tsvat::finetune;

namespace {

ts::TimeSeries noise_series(Index T, std::uint64_t seed) {
  Rng rng(seed);
  Matrix v(T, 1);
  for (Index t = 0; t < T; ++t) v(t, 0) = std::sin(0.3 * static_cast<double>(t)) + 0.1 * rng.normal();
  return ts::TimeSeries::from_matrix("noise", v);
}

encoder::EncoderModel small_model(std::uint64_t seed = 0) {
  encoder::EncoderConfig cfg;
  cfg.patch_len = 4;
  cfg.d_model = 16;
  cfg.n_layers = 1;
  cfg.n_heads = 2;
  cfg.ffn_dim = 32;
  cfg.seed = seed;
  return encoder::init_model(cfg);
}

bool same_batches(const std::vector<Batch>& a, const std::vector<Batch>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].window_length != b[i].window_length || a[i].starts != b[i].starts) return false;
    if (a[i].masks.size() != b[i].masks.size()) return false;
    for (std::size_t k = 0; k < a[i].masks.size(); ++k) {
      if (a[i].masks[k].masked != b[i].masks[k].masked) return false;
    }
  }
  return true;
}

}  // namespace

TEST(FixedBatches, CountsAreFloorOfPercentages) {
  const auto s = noise_series(10000, 1);
  FinetuneConfig cfg;
  cfg.mix_windows = false;
  cfg.window_lengths = {100};
  cfg.training_percent = 0.15;
  cfg.valid_percent = 0.30;
  const auto splits = build_batches_fixed(s, cfg);
  ASSERT_EQ(splits.size(), 1u);
  EXPECT_EQ(splits[0].train_starts.size(), 15u);
  EXPECT_EQ(splits[0].valid_starts.size(), 30u);
  std::set<Index> all(splits[0].train_starts.begin(), splits[0].train_starts.end());
  for (const Index v : splits[0].valid_starts) EXPECT_TRUE(all.insert(v).second) << v;
  for (const Index start : all) EXPECT_EQ(start % 100, 0);
}

TEST(FixedBatches, FullFractionPartitionsWindows) {
  const auto s = noise_series(1000, 2);
  FinetuneConfig cfg;
  cfg.mix_windows = false;
  cfg.window_lengths = {17, 40};
  cfg.training_percent = 0.7;
  cfg.valid_percent = 0.3;
  const auto splits = build_batches_fixed(s, cfg);
  ASSERT_EQ(splits.size(), 2u);
  for (const auto& split : splits) {
    std::vector<Index> all = split.train_starts;
    all.insert(all.end(), split.valid_starts.begin(), split.valid_starts.end());
    std::sort(all.begin(), all.end());
    const Index n = 1000 / split.window_length;
    ASSERT_EQ(static_cast<Index>(all.size()), n);
    for (Index k = 0; k < n; ++k) EXPECT_EQ(all[k], k * split.window_length);
  }
}

TEST(FixedBatches, SeedControlsSelection) {
  const auto s = noise_series(5000, 3);
  FinetuneConfig cfg;
  cfg.mix_windows = false;
  cfg.window_lengths = {50};
  const auto a = build_batches_fixed(s, cfg);
  const auto b = build_batches_fixed(s, cfg);
  EXPECT_EQ(a[0].train_starts, b[0].train_starts);
  EXPECT_EQ(a[0].valid_starts, b[0].valid_starts);
  cfg.seed = 9;
  const auto c = build_batches_fixed(s, cfg);
  EXPECT_NE(a[0].train_starts, c[0].train_starts);
}

TEST(FixedBatches, TooFewWindows) {
  const auto s = noise_series(100, 4);
  FinetuneConfig cfg;
  cfg.mix_windows = false;
  cfg.window_lengths = {40};
  EXPECT_TSVAT_ERROR(build_batches_fixed(s, cfg), ErrorCode::NotEnoughWindows);
}

TEST(MixedBatches, TemporalRegions) {
  const auto s = noise_series(4000, 5);
  FinetuneConfig cfg;
  cfg.window_lengths = {17, 54};
  cfg.training_percent = 0.2;
  cfg.valid_percent = 0.3;
  const auto m = build_batches_mixed(s, cfg);
  EXPECT_EQ(m.train.begin, 0);
  EXPECT_EQ(m.train.end, 800);
  EXPECT_EQ(m.valid.begin, 800);
  EXPECT_EQ(m.valid.end, 2000);
  ASSERT_FALSE(m.valid_batches.empty());
  Index previous_end = m.valid.begin;
  for (const auto& b : m.valid_batches) {
    for (const Index start : b.starts) {
      EXPECT_GE(start, previous_end);
      EXPECT_LE(start + b.window_length, m.valid.end);
      previous_end = start + b.window_length;
    }
  }
}

TEST(MixedBatches, ValidationPassesReuseIdenticalBatches) {
  const auto s = noise_series(4000, 6);
  FinetuneConfig cfg;
  cfg.window_lengths = {17, 54};
  const auto schedule = BatchSchedule::build(s, cfg, 4);
  const auto first = schedule.validation();
  const auto again = BatchSchedule::build(s, cfg, 4);
  EXPECT_TRUE(same_batches(first, schedule.validation()));
  EXPECT_TRUE(same_batches(first, again.validation()));
  for (const auto& b : first) EXPECT_EQ(b.masks.size(), b.starts.size());
}

TEST(MixedBatches, SingleLengthMatchesTemporalTiling) {
  const auto s = noise_series(2000, 7);
  FinetuneConfig cfg;
  cfg.window_lengths = {17};
  cfg.batch_size = 5;
  const auto m = build_batches_mixed(s, cfg);
  std::vector<Index> starts;
  for (const auto& b : m.valid_batches) {
    EXPECT_EQ(b.window_length, 17);
    starts.insert(starts.end(), b.starts.begin(), b.starts.end());
  }
  const Index n = m.valid.size() / 17;
  ASSERT_EQ(static_cast<Index>(starts.size()), n);
  for (Index k = 0; k < n; ++k) EXPECT_EQ(starts[k], m.valid.begin + 17 * k);
}

TEST(MixedBatches, LengthFrequenciesAreUniform) {
  Rng rng(11);
  std::map<Index, int> counts;
  int total = 0;
  const Region big{0, 10'000'000};
  const auto batches = walk_region(big, {17, 54}, 4, rng);
  for (std::size_t i = 0; i < 1000 && i < batches.size(); ++i) {
    ++counts[batches[i].window_length];
    ++total;
  }
  ASSERT_EQ(total, 1000);
  EXPECT_NEAR(counts[17] / 1000.0, 0.5, 0.05);
  EXPECT_NEAR(counts[54] / 1000.0, 0.5, 0.05);
}

TEST(MixedBatches, RegionTooShort) {
  const auto s = noise_series(300, 8);
  FinetuneConfig cfg;
  cfg.window_lengths = {17, 80};
  cfg.training_percent = 0.2;
  EXPECT_TSVAT_ERROR(build_batches_mixed(s, cfg), ErrorCode::RegionTooShort);
}

TEST(MixedBatches, TrainingWindowsStayOutOfValidation) {
  const auto s = noise_series(3000, 9);
  FinetuneConfig cfg;
  cfg.window_lengths = {17, 33};
  const auto schedule = BatchSchedule::build(s, cfg, 4);
  for (Index epoch = 1; epoch <= 3; ++epoch) {
    for (const auto& b : schedule.training(epoch)) {
      for (const Index start : b.starts) EXPECT_LE(start + b.window_length, 600);
    }
  }
}

TEST(Config, Validation) {
  FinetuneConfig cfg;
  EXPECT_NO_THROW(cfg.validate(8));
  cfg.window_lengths = {};
  EXPECT_TSVAT_ERROR(cfg.validate(8), ErrorCode::InvalidConfig);
  cfg.window_lengths = {10};
  EXPECT_TSVAT_ERROR(cfg.validate(8), ErrorCode::InvalidConfig);
  cfg = FinetuneConfig{};
  cfg.training_percent = 0.8;
  EXPECT_TSVAT_ERROR(cfg.validate(8), ErrorCode::InvalidConfig);
  cfg = FinetuneConfig{};
  cfg.mask_percent = 1.0;
  EXPECT_TSVAT_ERROR(cfg.validate(8), ErrorCode::InvalidConfig);
  cfg = FinetuneConfig{};
  cfg.epochs = 0;
  EXPECT_TSVAT_ERROR(cfg.validate(8), ErrorCode::InvalidConfig);
}

TEST(Config, CanonicalFormTracksEveryField) {
  FinetuneConfig a;
  FinetuneConfig b;
  EXPECT_EQ(a.canonical(), b.canonical());
  b.mask_percent = 0.5;
  EXPECT_NE(a.canonical(), b.canonical());
  b = a;
  b.seed = 1;
  EXPECT_NE(a.canonical(), b.canonical());
}

TEST(LossImprovement, Identities) {
  EXPECT_EQ(loss_improvement(0.37, 0.37), 0.0);
  EXPECT_EQ(loss_improvement(2.0, 1.0), 50.0);
  EXPECT_EQ(loss_improvement(1.0, 0.0), 100.0);
  EXPECT_LT(loss_improvement(1.0, 1.5), 0.0);
  EXPECT_TSVAT_ERROR(loss_improvement(0.0, 0.0), ErrorCode::ZeroBaseline);
}

TEST(Finetune, ZeroLearningRateIsIdentity) {
  const auto s = noise_series(2000, 10);
  FinetuneConfig cfg;
  cfg.window_lengths = {16, 24};
  cfg.epochs = 3;
  cfg.learning_rate = 0.0;
  const auto model = small_model();
  const auto result = finetune::finetune(model, s, cfg);
  EXPECT_EQ(result.record.loss_final, result.record.loss_first);
  EXPECT_EQ(result.record.improvement_percent, 0.0);
  EXPECT_EQ(result.record.best_epoch, 1);
}

TEST(Finetune, RecordInvariants) {
  const auto s = noise_series(2000, 12);
  for (const bool mix : {false, true}) {
    FinetuneConfig cfg;
    cfg.window_lengths = {16, 24};
    cfg.mix_windows = mix;
    cfg.epochs = 5;
    const auto model = small_model(2);
    const auto result = finetune::finetune(model, s, cfg);
    const auto& r = result.record;
    const auto schedule = BatchSchedule::build(s, cfg, model.config.patch_len);
    EXPECT_EQ(r.loss_first, evaluate(model, s, schedule.validation()));
    EXPECT_EQ(r.loss_final, evaluate(result.best_model, s, schedule.validation()));
    ASSERT_EQ(r.train_curve.size(), 5u);
    ASSERT_EQ(r.valid_curve.size(), 5u);
    const auto argmin = std::min_element(r.train_curve.begin(), r.train_curve.end());
    EXPECT_EQ(r.best_epoch, 1 + (argmin - r.train_curve.begin()));
    EXPECT_EQ(r.improvement_percent, (r.loss_first - r.loss_final) * 100.0 / r.loss_first);
    EXPECT_EQ(r.improvement_percent > 0, r.loss_final < r.loss_first);
    EXPECT_EQ(r.config_hash.size(), 64u);
    EXPECT_FALSE(r.diverged);
  }
}

TEST(Finetune, DeterministicRecord) {
  const auto s = noise_series(2000, 13);
  FinetuneConfig cfg;
  cfg.window_lengths = {16, 24};
  cfg.epochs = 3;
  const auto a = finetune::finetune(small_model(4), s, cfg).record;
  const auto b = finetune::finetune(small_model(4), s, cfg).record;
  EXPECT_EQ(a.loss_first, b.loss_first);
  EXPECT_EQ(a.loss_final, b.loss_final);
  EXPECT_EQ(a.best_epoch, b.best_epoch);
  EXPECT_EQ(a.train_curve, b.train_curve);
  EXPECT_EQ(a.valid_curve, b.valid_curve);
  EXPECT_EQ(a.config_hash, b.config_hash);
}

TEST(Finetune, DivergenceIsReported) {
  const auto s = noise_series(2000, 14);
  FinetuneConfig cfg;
  cfg.window_lengths = {16};
  cfg.epochs = 5;
  cfg.learning_rate = 1e6;
  try {
    finetune::finetune(small_model(), s, cfg);
    FAIL() << "expected divergence";
  } catch (const DivergedError& e) {
    EXPECT_EQ(e.code(), ErrorCode::DivergedLoss);
    EXPECT_TRUE(e.record().diverged);
  }
}

TEST(Finetune, LearnsS1) {
  synth::SynthConfig sc;
  sc.total_length = 4000;
  const auto s = synth::gen_s1(sc).series;
  FinetuneConfig cfg;
  cfg.window_lengths = select_window_lengths(s, 2, 17, 16, 2000);
  ASSERT_EQ(cfg.window_lengths.size(), 2u);
  const auto result = finetune::finetune(encoder::init_model(encoder::EncoderConfig{}), s, cfg);
  EXPECT_GE(result.record.improvement_percent, 20.0);
}

TEST(WindowSelection, BaseFirstThenDominant) {
  Matrix v(1000, 1);
  for (Index t = 0; t < 1000; ++t) v(t, 0) = std::sin(2.0 * M_PI * static_cast<double>(t) / 25.0);
  const auto s = ts::TimeSeries::from_matrix("sine", v);
  EXPECT_EQ(select_window_lengths(s, 1, 17, 16, 500), (std::vector<Index>{17}));
  EXPECT_EQ(select_window_lengths(s, 2, 17, 16, 500), (std::vector<Index>{17, 25}));
}
