#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "gradcheck.hpp"
#include "test_support.hpp"
#include "tsvat/encoder.hpp"
#include "tsvat/rng.hpp"

using namespace tsvat;
using namespace tsvat::encoder;

namespace {

EncoderConfig tiny_config() {
  EncoderConfig cfg;
  cfg.patch_len = 4;
  cfg.d_model = 8;
  cfg.n_layers = 1;
  cfg.n_heads = 2;
  cfg.ffn_dim = 16;
  cfg.max_patches = 16;
  cfg.seed = 3;
  return cfg;
}

Matrix random_window(Index w, Index c, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  Matrix m(w, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal() + 0.5;
  return m;
}

MaskSpec mask_of(std::initializer_list<bool> bits) {
  MaskSpec m;
  m.masked = bits;
  m.ratio = 0.5;
  return m;
}

}  // namespace

TEST(InitModel, DeterministicPerSeed) {
  const auto cfg = EncoderConfig{};
  EXPECT_EQ(checkpoint_bytes(init_model(cfg)), checkpoint_bytes(init_model(cfg)));
  auto other = cfg;
  other.seed = 1;
  EXPECT_NE(checkpoint_bytes(init_model(cfg)), checkpoint_bytes(init_model(other)));
}

TEST(InitModel, ValidatesHeadDivisibility) {
  EncoderConfig cfg;
  cfg.d_model = 64;
  cfg.n_heads = 4;
  EXPECT_NO_THROW(init_model(cfg));
  cfg.d_model = 10;
  EXPECT_TSVAT_ERROR(init_model(cfg), ErrorCode::InvalidConfig);
  cfg = EncoderConfig{};
  cfg.patch_len = 1;
  EXPECT_TSVAT_ERROR(init_model(cfg), ErrorCode::InvalidConfig);
}

TEST(InitModel, ConventionsAndParameterCount) {
  for (const auto* name : {"small", "base", "large"}) {
    const auto cfg = EncoderConfig::preset(name);
    const auto model = init_model(cfg);
    EXPECT_EQ(model.params.scalar_count(), parameter_count(cfg));
    EXPECT_TRUE((model.params.layers[0].ln1_gain.array() == 1.0).all());
    EXPECT_TRUE((model.params.final_gain.array() == 1.0).all());
    EXPECT_TRUE(model.params.layers[0].ln1_bias.isZero(0.0));
  }
  // N*D + D + Pmax*D + D + L*(4D^2 + 9D + 2DF + F) + 2D + D*N + N for the defaults.
  EXPECT_EQ(parameter_count(EncoderConfig{}),
            8 * 64 + 64 + 128 * 64 + 64 + 2 * (4 * 64 * 64 + 9 * 64 + 2 * 64 * 128 + 128) +
                2 * 64 + 64 * 8 + 8);
}

TEST(Patchify, FloorArithmetic) {
  const auto w = random_window(54, 1, 1);
  const auto p = patchify(w, 8);
  ASSERT_EQ(p.size(), 1u);
  EXPECT_EQ(p[0].rows(), 6);
  for (Index j = 0; j < 6; ++j)
    for (Index n = 0; n < 8; ++n) EXPECT_EQ(p[0](j, n), w(j * 8 + n, 0));

  const auto exact = random_window(8, 2, 2);
  const auto q = patchify(exact, 8);
  ASSERT_EQ(q.size(), 2u);
  EXPECT_EQ(q[1].row(0).transpose(), exact.col(1));
  EXPECT_TSVAT_ERROR(patchify(random_window(7, 1, 3), 8), ErrorCode::WindowShorterThanPatch);
}

TEST(SampleMask, CountsFollowRoundHalfUp) {
  Rng rng(1);
  EXPECT_EQ(sample_mask(6, 0.25, rng).masked_count(), 2);
  EXPECT_EQ(sample_mask(4, 0.01, rng).masked_count(), 1);
  EXPECT_EQ(sample_mask(4, 0.99, rng).masked_count(), 3);
  EXPECT_EQ(mask_count(10, 0.5), 5);
}

TEST(SampleMask, UniformFrequencies) {
  Rng rng(2024);
  std::vector<int> hits(10, 0);
  for (int d = 0; d < 10000; ++d) {
    const auto m = sample_mask(10, 0.5, rng);
    ASSERT_EQ(m.masked_count(), 5);
    for (int j = 0; j < 10; ++j) hits[j] += m.masked[j] ? 1 : 0;
  }
  for (const int h : hits) EXPECT_NEAR(h / 10000.0, 0.5, 0.02);
}

TEST(Forward, ShapesAndDeterminism) {
  const auto model = init_model(EncoderConfig{});
  const auto w = random_window(54, 3, 4);
  const auto out = forward(model, w);
  ASSERT_EQ(out.reconstruction.size(), 3u);
  EXPECT_EQ(out.patches, 6);
  EXPECT_EQ(out.reconstruction[0].rows(), 6);
  EXPECT_EQ(out.reconstruction[0].cols(), 8);
  EXPECT_EQ(out.patch_embeddings.rows(), 18);
  EXPECT_EQ(out.window_embedding.size(), 64);
  const auto again = forward(model, w);
  EXPECT_EQ(out.window_embedding, again.window_embedding);
  EXPECT_EQ(out.reconstruction[2], again.reconstruction[2]);
}

TEST(Forward, WindowEmbeddingIsMeanOfPatchEmbeddings) {
  const auto model = init_model(EncoderConfig{});
  const auto out = forward(model, random_window(80, 2, 5));
  const RowVector mean = out.patch_embeddings.colwise().sum() / out.patch_embeddings.rows();
  EXPECT_LT((mean - out.window_embedding).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Forward, AttentionRowsAreDistributions) {
  const auto model = init_model(EncoderConfig{});
  const auto out = forward(model, random_window(64, 2, 6));
  ASSERT_EQ(out.attention.size(), 2u * 4u);
  for (const auto& a : out.attention) {
    EXPECT_GE(a.minCoeff(), 0.0);
    for (Index r = 0; r < a.rows(); ++r) EXPECT_NEAR(a.row(r).sum(), 1.0, 1e-9);
  }
}

TEST(Forward, ScaleConsistencyUpToNormalizationEpsilon) {
  // Scaling changes (x - mean) / (std + eps) only through eps, so the encoder
  // input and therefore the embeddings agree to O(eps / std).
  const auto model = init_model(EncoderConfig{});
  const auto w = random_window(64, 1, 7);
  const auto a = forward(model, w);
  const auto b = forward(model, Matrix(w * 37.0));
  EXPECT_LT((a.patch_embeddings - b.patch_embeddings).cwiseAbs().maxCoeff(), 1e-4);
  // Reconstructions are de-normalized, so they scale with the input.
  EXPECT_LT((a.reconstruction[0] * 37.0 - b.reconstruction[0]).cwiseAbs().maxCoeff(), 1e-2);
}

TEST(Forward, MaskingChangesMaskedPatchReconstruction) {
  const auto model = init_model(EncoderConfig{});
  const auto w = random_window(48, 1, 8);
  const auto plain = forward(model, w);
  const auto masked = forward(model, w, mask_of({false, false, true, false, false, false}));
  EXPECT_GT((plain.reconstruction[0].row(2) - masked.reconstruction[0].row(2)).cwiseAbs().maxCoeff(),
            1e-6);
}

TEST(Forward, RejectsShapeMismatch) {
  const auto model = init_model(EncoderConfig{});
  EXPECT_TSVAT_ERROR(forward(model, random_window(48, 1, 8), mask_of({true, false})),
                     ErrorCode::ShapeMismatch);
  EXPECT_TSVAT_ERROR(forward(model, random_window(7, 1, 8)), ErrorCode::WindowShorterThanPatch);
  auto cfg = EncoderConfig{};
  cfg.max_patches = 4;
  EXPECT_TSVAT_ERROR(forward(init_model(cfg), random_window(48, 1, 8)), ErrorCode::ShapeMismatch);
}

TEST(MaskedMse, UnmaskedTargetsAreExcluded) {
  const auto model = init_model(EncoderConfig{});
  const auto w = random_window(48, 2, 9);
  const auto mask = mask_of({true, false, false, true, false, false});
  const auto out = forward(model, w, mask);
  auto target = patchify(w, 8);
  const double base = masked_mse(out, target, mask);
  Rng rng(10);
  for (auto& ch : target) {
    for (const Index j : {1, 2, 4, 5}) {
      for (Index n = 0; n < 8; ++n) ch(j, n) += 1e3 * rng.normal();
    }
  }
  EXPECT_EQ(masked_mse(out, target, mask), base);
}

TEST(MaskedMse, GarbageOutsideMaskIsIgnored) {
  const auto model = init_model(EncoderConfig{});
  const auto mask = mask_of({false, true, false, false, false, false});
  const auto out = forward(model, random_window(48, 1, 11), mask);
  Patches target = out.reconstruction;
  target[0].row(0).setConstant(123.0);
  target[0].row(5).setConstant(-9.0);
  EXPECT_EQ(masked_mse(out, target, mask), 0.0);

  target = out.reconstruction;
  target[0].row(1).array() += 0.75;
  EXPECT_NEAR(masked_mse(out, target, mask), 0.75 * 0.75, 1e-12);
}

TEST(MaskedMse, MatchesBruteForceSummation) {
  const auto model = init_model(EncoderConfig{});
  Rng rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    const auto w = random_window(72, 3, 100 + trial);
    const auto mask = sample_mask(9, 0.4, rng);
    const auto out = forward(model, w, mask);
    const auto target = patchify(w, 8);
    double sum = 0;
    long count = 0;
    for (std::size_t c = 0; c < 3; ++c)
      for (Index j = 0; j < 9; ++j)
        if (mask.masked[j])
          for (Index n = 0; n < 8; ++n) {
            const double d = out.reconstruction[c](j, n) - w(j * 8 + n, static_cast<Index>(c));
            sum += d * d;
            ++count;
          }
    EXPECT_NEAR(masked_mse(out, target, mask), sum / count, 1e-12);
  }
}

TEST(MaskedMse, RequiresAMaskedPatch) {
  const auto model = init_model(EncoderConfig{});
  const auto none = mask_of({false, false, false, false, false, false});
  const auto w = random_window(48, 1, 13);
  const auto out = forward(model, w, none);
  EXPECT_TSVAT_ERROR(masked_mse(out, patchify(w, 8), none), ErrorCode::NoMaskedPatches);
}

TEST(FullMse, IdentitiesAndRelationToMaskedLoss) {
  const auto model = init_model(EncoderConfig{});
  const auto mask = mask_of({true, true, true, false, true, true});
  const auto out = forward(model, random_window(48, 1, 14), mask);
  EXPECT_EQ(full_mse(out, out.reconstruction), 0.0);

  Patches shifted = out.reconstruction;
  shifted[0].array() += 0.5;
  EXPECT_NEAR(full_mse(out, shifted), 0.25, 1e-12);

  // Five of six masked, the unmasked patch has zero error: the two losses agree
  // up to the ratio of counted entries.
  Rng rng(15);
  Patches target = out.reconstruction;
  for (const Index j : {0, 1, 2, 4, 5})
    for (Index n = 0; n < 8; ++n) target[0](j, n) += rng.normal();
  EXPECT_NEAR(full_mse(out, target), masked_mse(out, target, mask) * 5.0 / 6.0, 1e-12);
}

TEST(Gradients, MatchCentralFiniteDifferences) {
  const auto model = init_model(tiny_config());
  Rng rng(16);
  const auto w = random_window(16, 1, 17);
  const auto mask = sample_mask(4, 0.5, rng);
  const auto report =
      gradcheck::compare(model, w, patchify(w, 4), &mask, Loss::Masked);
  EXPECT_LT(report.max_relative_error, 1e-4) << report.worst_parameter;
  RecordProperty("max_relative_error", std::to_string(report.max_relative_error));
  EXPECT_EQ(report.checked, parameter_count(tiny_config()));
}

TEST(Gradients, MatchFiniteDifferencesMultivariateFullLoss) {
  const auto model = init_model(tiny_config());
  const auto w = random_window(13, 2, 18, 3.0);
  const auto report = gradcheck::compare(model, w, patchify(w, 4), nullptr, Loss::Full);
  EXPECT_LT(report.max_relative_error, 1e-4) << report.worst_parameter;
}

TEST(Gradients, VanishAtZeroLoss) {
  const auto model = init_model(tiny_config());
  const auto w = random_window(16, 1, 19);
  const auto mask = mask_of({false, true, true, false});
  const auto target = forward(model, w, mask).reconstruction;
  const auto g = gradients(model, w, target, &mask, Loss::Masked);
  EXPECT_EQ(g.loss, 0.0);
  g.grads.for_each([](const std::string& name, const Matrix& m) {
    EXPECT_LT(m.cwiseAbs().maxCoeff(), 1e-10) << name;
  });
}

TEST(Gradients, MaskEmbeddingUnusedWithoutMask) {
  const auto model = init_model(tiny_config());
  const auto w = random_window(16, 1, 20);
  const auto g = gradients(model, w, patchify(w, 4), nullptr, Loss::Full);
  EXPECT_TRUE(g.grads.mask_embedding.isZero(0.0));
  EXPECT_GT(g.grads.patch_weight.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_TSVAT_ERROR(gradients(model, w, patchify(w, 4), nullptr, Loss::Masked),
                     ErrorCode::NoMaskedPatches);
}

TEST(Checkpoint, ByteExactRoundTrip) {
  const auto model = init_model(EncoderConfig::preset("base", 9));
  const auto bytes = checkpoint_bytes(model);
  const auto back = checkpoint_from_bytes(bytes);
  EXPECT_EQ(back.config, model.config);
  EXPECT_EQ(checkpoint_bytes(back), bytes);
  EXPECT_EQ(back.params.head_weight, model.params.head_weight);
}

TEST(Checkpoint, RejectsCorruptHeader) {
  auto bytes = checkpoint_bytes(init_model(tiny_config()));
  bytes[0] = 'X';
  EXPECT_TSVAT_ERROR(checkpoint_from_bytes(bytes), ErrorCode::ParseError);
  auto truncated = checkpoint_bytes(init_model(tiny_config()));
  truncated.resize(truncated.size() - 5);
  EXPECT_TSVAT_ERROR(checkpoint_from_bytes(truncated), ErrorCode::ParseError);
}
