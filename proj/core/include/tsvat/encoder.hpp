#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tsvat/rng.hpp"
#include "tsvat/types.hpp"

namespace tsvat::encoder {

struct EncoderConfig {
  Index patch_len = 8;
  Index d_model = 64;
  Index n_layers = 2;
  Index n_heads = 4;
  Index ffn_dim = 128;
  Index max_patches = 128;
  std::uint64_t seed = 0;

  /// Throws InvalidConfig (e.g. d_model not divisible by n_heads, patch_len < 2).
  void validate() const;
  bool operator==(const EncoderConfig&) const = default;

  /// Scaled-down size presets: "small", "base", "large".
  static EncoderConfig preset(std::string_view name, std::uint64_t seed = 0);
};

/// Closed-form number of scalar parameters implied by a config.
Index parameter_count(const EncoderConfig& cfg) noexcept;

struct LayerParameters {
  Matrix ln1_gain, ln1_bias;  // 1 x D
  Matrix wq, bq, wk, bk, wv, bv, wo, bo;
  Matrix ln2_gain, ln2_bias;  // 1 x D
  Matrix w1, b1;              // D x F, 1 x F
  Matrix w2, b2;              // F x D, 1 x D
};

/// Named tensors of the patch transformer. Linear maps act on row vectors
/// (y = x W + b), so every weight is stored as in_features x out_features.
struct Parameters {
  Matrix patch_weight;    // N x D
  Matrix patch_bias;      // 1 x D
  Matrix position_table;  // P_max x D
  Matrix mask_embedding;  // 1 x D
  std::vector<LayerParameters> layers;
  Matrix final_gain, final_bias;  // 1 x D
  Matrix head_weight;             // D x N
  Matrix head_bias;               // 1 x N

  /// Visits (name, tensor) in canonical order; the order defines checkpoints.
  template <class F>
  void for_each(F&& f);
  template <class F>
  void for_each(F&& f) const;

  static Parameters zeros(const EncoderConfig& cfg);
  Index scalar_count() const;
  bool all_finite() const;
};

/// target += scale * delta, tensor by tensor. Shapes must match.
void add_scaled(Parameters& target, const Parameters& delta, double scale);

struct EncoderModel {
  EncoderConfig config;
  Parameters params;
};

/// Deterministic Glorot-uniform projections, sinusoidal position table,
/// unit layer-norm gains and zero biases.
EncoderModel init_model(const EncoderConfig& cfg);

/// Patches of one channel are the rows of a P x N matrix.
using Patches = std::vector<Matrix>;

/// P = floor(w / N) consecutive patches per channel; the remainder is dropped.
Patches patchify(const Matrix& window, Index patch_len);

struct MaskSpec {
  std::vector<bool> masked;  // one entry per patch position, shared by channels
  double ratio = 0.0;

  Index size() const noexcept { return static_cast<Index>(masked.size()); }
  Index masked_count() const noexcept;
};

/// clamp(round_half_up(ratio * P), 1, P - 1).
Index mask_count(Index patches, double ratio) noexcept;
MaskSpec sample_mask(Index patches, double ratio, Rng& rng);

struct ForwardOutput {
  Patches reconstruction;       // per channel P x N, in input units
  Matrix patch_embeddings;      // (C * P) x D, channel-major token order
  RowVector window_embedding;   // mean over token rows of patch_embeddings
  std::vector<Matrix> attention;  // layer-major, head-minor; tokens x tokens
  Index patches = 0;            // P per channel
};

ForwardOutput forward(const EncoderModel& model, const Matrix& window);
ForwardOutput forward(const EncoderModel& model, const Matrix& window, const MaskSpec& mask);

/// Mean squared error over masked patch positions only. Throws NoMaskedPatches.
double masked_mse(const ForwardOutput& output, const Patches& target, const MaskSpec& mask);
/// Mean squared error over every patch position.
double full_mse(const ForwardOutput& output, const Patches& target);

enum class Loss { Masked, Full };

struct GradientResult {
  double loss = 0.0;
  Parameters grads;
};

/// Exact reverse-mode gradient of the chosen loss with respect to every parameter.
GradientResult gradients(const EncoderModel& model, const Matrix& window, const Patches& target,
                         const MaskSpec* mask, Loss loss = Loss::Masked);
/// Convenience overload: the target is the window's own patches.
GradientResult gradients(const EncoderModel& model, const Matrix& window, const MaskSpec& mask);

/// Loss only, without building gradients.
double loss_value(const EncoderModel& model, const Matrix& window, const Patches& target,
                  const MaskSpec* mask, Loss loss = Loss::Masked);

/// Checkpoint stream: magic, format version, config, then named float64 tensors.
void write_checkpoint(std::ostream& out, const EncoderModel& model);
EncoderModel read_checkpoint(std::istream& in);
std::vector<std::uint8_t> checkpoint_bytes(const EncoderModel& model);
EncoderModel checkpoint_from_bytes(const std::vector<std::uint8_t>& bytes);

// ---------------------------------------------------------------------------

template <class F>
void Parameters::for_each(F&& f) {
  f(std::string("patch.weight"), patch_weight);
  f(std::string("patch.bias"), patch_bias);
  f(std::string("position.table"), position_table);
  f(std::string("mask.embedding"), mask_embedding);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    auto& l = layers[i];
    const std::string p = "layers." + std::to_string(i) + ".";
    f(p + "ln1.gain", l.ln1_gain);
    f(p + "ln1.bias", l.ln1_bias);
    f(p + "attn.wq", l.wq);
    f(p + "attn.bq", l.bq);
    f(p + "attn.wk", l.wk);
    f(p + "attn.bk", l.bk);
    f(p + "attn.wv", l.wv);
    f(p + "attn.bv", l.bv);
    f(p + "attn.wo", l.wo);
    f(p + "attn.bo", l.bo);
    f(p + "ln2.gain", l.ln2_gain);
    f(p + "ln2.bias", l.ln2_bias);
    f(p + "ffn.w1", l.w1);
    f(p + "ffn.b1", l.b1);
    f(p + "ffn.w2", l.w2);
    f(p + "ffn.b2", l.b2);
  }
  f(std::string("final_norm.gain"), final_gain);
  f(std::string("final_norm.bias"), final_bias);
  f(std::string("head.weight"), head_weight);
  f(std::string("head.bias"), head_bias);
}

template <class F>
void Parameters::for_each(F&& f) const {
  const_cast<Parameters*>(this)->for_each(
      [&](const std::string& name, Matrix& m) { f(name, static_cast<const Matrix&>(m)); });
}

}  // namespace tsvat::encoder
