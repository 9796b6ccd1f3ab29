#include "tsvat/encoder.hpp"

#include <cmath>
#include <numbers>

#include "tsvat/error.hpp"
#include "tsvat/series.hpp"

namespace tsvat::encoder {
namespace {

constexpr double kLayerNormEps = 1e-5;

Matrix glorot(Index fan_in, Index fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix m(fan_in, fan_out);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-a, a);
  return m;
}

Matrix sinusoidal_table(Index rows, Index dim) {
  Matrix table(rows, dim);
  for (Index pos = 0; pos < rows; ++pos) {
    for (Index i = 0; i < dim; ++i) {
      const double exponent = static_cast<double>(2 * (i / 2)) / static_cast<double>(dim);
      const double angle = static_cast<double>(pos) / std::pow(10000.0, exponent);
      table(pos, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return table;
}

// --- layer norm ------------------------------------------------------------

struct NormCache {
  Matrix xhat;
  Vector inv_std;
};

Matrix layer_norm(const Matrix& x, const Matrix& gain, const Matrix& bias, NormCache& cache) {
  const Index rows = x.rows();
  const double d = static_cast<double>(x.cols());
  cache.xhat.resize(rows, x.cols());
  cache.inv_std.resize(rows);
  for (Index r = 0; r < rows; ++r) {
    const double mean = x.row(r).sum() / d;
    const double var = (x.row(r).array() - mean).square().sum() / d;
    cache.inv_std(r) = 1.0 / std::sqrt(var + kLayerNormEps);
    cache.xhat.row(r) = (x.row(r).array() - mean) * cache.inv_std(r);
  }
  Matrix y = cache.xhat.array().rowwise() * gain.row(0).array();
  y.rowwise() += bias.row(0);
  return y;
}

Matrix layer_norm_backward(const Matrix& dy, const Matrix& gain, const NormCache& cache,
                           Matrix& dgain, Matrix& dbias) {
  dgain.row(0) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
  dbias.row(0) += dy.colwise().sum();
  const double d = static_cast<double>(dy.cols());
  Matrix dxhat = dy.array().rowwise() * gain.row(0).array();
  Matrix dx(dy.rows(), dy.cols());
  for (Index r = 0; r < dy.rows(); ++r) {
    const double mean_dxhat = dxhat.row(r).sum() / d;
    const double mean_dxhat_xhat = dxhat.row(r).dot(cache.xhat.row(r)) / d;
    dx.row(r) = cache.inv_std(r) *
                (dxhat.row(r).array() - mean_dxhat - cache.xhat.row(r).array() * mean_dxhat_xhat);
  }
  return dx;
}

// --- activations -----------------------------------------------------------

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

void add_bias(Matrix& m, const Matrix& bias) { m.rowwise() += bias.row(0); }

// --- forward with cache ----------------------------------------------------

struct LayerCache {
  NormCache ln1;
  Matrix a;
  Matrix q, k, v;
  std::vector<Matrix> probs;
  Matrix o;
  NormCache ln2;
  Matrix b;
  Matrix z1, g;
};

struct Cache {
  RowVector scale;  // std + eps per channel
  RowVector mean;
  Matrix tokens;    // (C*P) x N normalized patches
  std::vector<bool> token_masked;
  std::vector<LayerCache> layers;
  NormCache final_norm;
  Matrix z;
};

ForwardOutput run_forward(const EncoderModel& model, const Matrix& window, const MaskSpec* mask,
                          Cache& cache) {
  const auto& cfg = model.config;
  const auto& p = model.params;
  const Index N = cfg.patch_len;
  const Index D = cfg.d_model;
  const Index C = window.cols();
  require(C >= 1, ErrorCode::ShapeMismatch, "window has no channels");
  require(window.rows() >= N, ErrorCode::WindowShorterThanPatch,
          "window length " + std::to_string(window.rows()) + " shorter than patch length " +
              std::to_string(N));
  const Index P = window.rows() / N;
  const Index n_tokens = C * P;
  require(n_tokens <= cfg.max_patches, ErrorCode::ShapeMismatch,
          std::to_string(n_tokens) + " tokens exceed max_patches " +
              std::to_string(cfg.max_patches));
  if (mask) {
    require(mask->size() == P, ErrorCode::ShapeMismatch,
            "mask length " + std::to_string(mask->size()) + " does not match " +
                std::to_string(P) + " patches");
  }

  const auto norm = ts::instance_normalize(window);
  cache.mean = norm.mean;
  cache.scale = norm.std.array() + ts::kNormalizeEpsilon;
  cache.tokens.resize(n_tokens, N);
  cache.token_masked.assign(static_cast<std::size_t>(n_tokens), false);
  for (Index c = 0; c < C; ++c) {
    for (Index j = 0; j < P; ++j) {
      cache.tokens.row(c * P + j) = norm.values.col(c).segment(j * N, N).transpose();
      if (mask && mask->masked[static_cast<std::size_t>(j)]) {
        cache.token_masked[static_cast<std::size_t>(c * P + j)] = true;
      }
    }
  }

  Matrix h = cache.tokens * p.patch_weight;
  add_bias(h, p.patch_bias);
  for (Index t = 0; t < n_tokens; ++t) {
    if (cache.token_masked[static_cast<std::size_t>(t)]) h.row(t) = p.mask_embedding.row(0);
  }
  // Token t = c * P + j reads row t of the table: channel c is offset by c * P.
  h += p.position_table.topRows(n_tokens);

  ForwardOutput out;
  out.patches = P;
  const Index H = cfg.n_heads;
  const Index dh = D / H;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  cache.layers.resize(p.layers.size());
  for (std::size_t li = 0; li < p.layers.size(); ++li) {
    const auto& lp = p.layers[li];
    auto& lc = cache.layers[li];
    lc.a = layer_norm(h, lp.ln1_gain, lp.ln1_bias, lc.ln1);
    lc.q = lc.a * lp.wq;
    add_bias(lc.q, lp.bq);
    lc.k = lc.a * lp.wk;
    add_bias(lc.k, lp.bk);
    lc.v = lc.a * lp.wv;
    add_bias(lc.v, lp.bv);
    lc.o.resize(n_tokens, D);
    lc.probs.resize(static_cast<std::size_t>(H));
    for (Index hh = 0; hh < H; ++hh) {
      Matrix scores = lc.q.middleCols(hh * dh, dh) * lc.k.middleCols(hh * dh, dh).transpose();
      scores *= inv_sqrt_dh;
      for (Index r = 0; r < n_tokens; ++r) {
        const double m = scores.row(r).maxCoeff();
        scores.row(r) = (scores.row(r).array() - m).exp();
        scores.row(r) /= scores.row(r).sum();
      }
      lc.o.middleCols(hh * dh, dh) = scores * lc.v.middleCols(hh * dh, dh);
      out.attention.push_back(scores);
      lc.probs[static_cast<std::size_t>(hh)] = std::move(scores);
    }
    Matrix attn = lc.o * lp.wo;
    add_bias(attn, lp.bo);
    h += attn;

    lc.b = layer_norm(h, lp.ln2_gain, lp.ln2_bias, lc.ln2);
    lc.z1 = lc.b * lp.w1;
    add_bias(lc.z1, lp.b1);
    lc.g = lc.z1.unaryExpr([](double x) { return gelu(x); });
    Matrix f = lc.g * lp.w2;
    add_bias(f, lp.b2);
    h += f;
  }
  cache.z = layer_norm(h, p.final_gain, p.final_bias, cache.final_norm);

  Matrix recon = cache.z * p.head_weight;
  add_bias(recon, p.head_bias);
  out.reconstruction.resize(static_cast<std::size_t>(C));
  for (Index c = 0; c < C; ++c) {
    out.reconstruction[c] =
        (recon.middleRows(c * P, P).array() * cache.scale(c) + cache.mean(c)).matrix();
  }
  out.patch_embeddings = cache.z;
  out.window_embedding = cache.z.colwise().mean();
  return out;
}

// d loss / d reconstruction (input units), as a tokens x N matrix.
Matrix loss_seed(const ForwardOutput& out, const Patches& target, const MaskSpec* mask, Loss loss,
                 double& value) {
  const Index C = static_cast<Index>(out.reconstruction.size());
  const Index P = out.patches;
  const Index N = C ? out.reconstruction[0].cols() : 0;
  Matrix seed = Matrix::Zero(C * P, N);
  const bool masked = loss == Loss::Masked;
  double count = 0.0;
  double sum = 0.0;
  for (Index c = 0; c < C; ++c) {
    for (Index j = 0; j < P; ++j) {
      if (masked && !mask->masked[static_cast<std::size_t>(j)]) continue;
      const RowVector diff = out.reconstruction[c].row(j) - target[c].row(j);
      sum += diff.squaredNorm();
      seed.row(c * P + j) = 2.0 * diff;
      count += static_cast<double>(N);
    }
  }
  value = sum / count;
  seed /= count;
  return seed;
}

void check_target(const ForwardOutput& out, const Patches& target) {
  require(target.size() == out.reconstruction.size(), ErrorCode::ShapeMismatch,
          "target channel count does not match reconstruction");
  for (std::size_t c = 0; c < target.size(); ++c) {
    require(target[c].rows() == out.reconstruction[c].rows() &&
                target[c].cols() == out.reconstruction[c].cols(),
            ErrorCode::ShapeMismatch, "target patch shape does not match reconstruction");
  }
}

void check_loss_inputs(const ForwardOutput& out, const Patches& target, const MaskSpec* mask,
                       Loss loss) {
  check_target(out, target);
  if (loss == Loss::Masked) {
    require(mask != nullptr && mask->masked_count() > 0, ErrorCode::NoMaskedPatches,
            "masked loss requires at least one masked patch");
    require(mask->size() == out.patches, ErrorCode::ShapeMismatch, "mask length mismatch");
  }
}

}  // namespace

// --- config ----------------------------------------------------------------

void EncoderConfig::validate() const {
  require(patch_len >= 2, ErrorCode::InvalidConfig, "patch_len must be >= 2");
  require(d_model >= 1 && n_heads >= 1 && n_layers >= 0 && ffn_dim >= 1 && max_patches >= 1,
          ErrorCode::InvalidConfig, "encoder dimensions must be positive");
  require(d_model % n_heads == 0, ErrorCode::InvalidConfig,
          "d_model " + std::to_string(d_model) + " not divisible by n_heads " +
              std::to_string(n_heads));
}

EncoderConfig EncoderConfig::preset(std::string_view name, std::uint64_t seed) {
  EncoderConfig cfg;
  cfg.seed = seed;
  if (name == "small") return cfg;
  if (name == "base") {
    cfg.n_layers = 3;
    cfg.d_model = 96;
    cfg.ffn_dim = 192;
    return cfg;
  }
  if (name == "large") {
    cfg.n_layers = 4;
    cfg.d_model = 128;
    cfg.ffn_dim = 256;
    return cfg;
  }
  fail(ErrorCode::ValidationError, "unknown model preset '" + std::string(name) + "'");
}

Index parameter_count(const EncoderConfig& c) noexcept {
  const Index D = c.d_model;
  const Index N = c.patch_len;
  const Index F = c.ffn_dim;
  const Index per_layer = 2 * D           // ln1
                          + 4 * (D * D + D)  // q, k, v, o
                          + 2 * D            // ln2
                          + D * F + F + F * D + D;
  return N * D + D + c.max_patches * D + D + c.n_layers * per_layer + 2 * D + D * N + N;
}

Parameters Parameters::zeros(const EncoderConfig& cfg) {
  const Index D = cfg.d_model;
  const Index N = cfg.patch_len;
  const Index F = cfg.ffn_dim;
  Parameters p;
  p.patch_weight = Matrix::Zero(N, D);
  p.patch_bias = Matrix::Zero(1, D);
  p.position_table = Matrix::Zero(cfg.max_patches, D);
  p.mask_embedding = Matrix::Zero(1, D);
  p.layers.resize(static_cast<std::size_t>(cfg.n_layers));
  for (auto& l : p.layers) {
    l.ln1_gain = Matrix::Zero(1, D);
    l.ln1_bias = Matrix::Zero(1, D);
    for (Matrix* w : {&l.wq, &l.wk, &l.wv, &l.wo}) *w = Matrix::Zero(D, D);
    for (Matrix* b : {&l.bq, &l.bk, &l.bv, &l.bo}) *b = Matrix::Zero(1, D);
    l.ln2_gain = Matrix::Zero(1, D);
    l.ln2_bias = Matrix::Zero(1, D);
    l.w1 = Matrix::Zero(D, F);
    l.b1 = Matrix::Zero(1, F);
    l.w2 = Matrix::Zero(F, D);
    l.b2 = Matrix::Zero(1, D);
  }
  p.final_gain = Matrix::Zero(1, D);
  p.final_bias = Matrix::Zero(1, D);
  p.head_weight = Matrix::Zero(D, N);
  p.head_bias = Matrix::Zero(1, N);
  return p;
}

Index Parameters::scalar_count() const {
  Index n = 0;
  for_each([&](const std::string&, const Matrix& m) { n += m.size(); });
  return n;
}

bool Parameters::all_finite() const {
  bool ok = true;
  for_each([&](const std::string&, const Matrix& m) { ok = ok && m.allFinite(); });
  return ok;
}

void add_scaled(Parameters& target, const Parameters& delta, double scale) {
  std::vector<const Matrix*> source;
  delta.for_each([&](const std::string&, const Matrix& m) { source.push_back(&m); });
  std::size_t i = 0;
  target.for_each([&](const std::string& name, Matrix& m) {
    require(i < source.size() && source[i]->rows() == m.rows() && source[i]->cols() == m.cols(),
            ErrorCode::ShapeMismatch, "parameter shape mismatch at " + name);
    m.noalias() += scale * *source[i++];
  });
}

EncoderModel init_model(const EncoderConfig& cfg) {
  cfg.validate();
  EncoderModel model{cfg, Parameters::zeros(cfg)};
  auto& p = model.params;
  const Index D = cfg.d_model;
  const Index N = cfg.patch_len;
  Rng rng = Rng(cfg.seed).split("encoder.init");
  p.patch_weight = glorot(N, D, rng);
  p.position_table = sinusoidal_table(cfg.max_patches, D);
  const double mask_scale = 1.0 / std::sqrt(static_cast<double>(D));
  for (Index i = 0; i < D; ++i) p.mask_embedding(0, i) = rng.uniform(-mask_scale, mask_scale);
  for (auto& l : p.layers) {
    l.ln1_gain.setOnes();
    l.ln2_gain.setOnes();
    l.wq = glorot(D, D, rng);
    l.wk = glorot(D, D, rng);
    l.wv = glorot(D, D, rng);
    l.wo = glorot(D, D, rng);
    l.w1 = glorot(D, cfg.ffn_dim, rng);
    l.w2 = glorot(cfg.ffn_dim, D, rng);
  }
  p.final_gain.setOnes();
  p.head_weight = glorot(D, N, rng);
  if (p.scalar_count() != parameter_count(cfg)) {
    fail(ErrorCode::InvalidConfig, "parameter count does not match closed form");
  }
  return model;
}

// --- patches and masks ------------------------------------------------------

Patches patchify(const Matrix& window, Index patch_len) {
  require(patch_len >= 1, ErrorCode::InvalidConfig, "patch length must be positive");
  require(window.rows() >= patch_len, ErrorCode::WindowShorterThanPatch,
          "window length " + std::to_string(window.rows()) + " shorter than patch length " +
              std::to_string(patch_len));
  const Index P = window.rows() / patch_len;
  Patches out(static_cast<std::size_t>(window.cols()));
  for (Index c = 0; c < window.cols(); ++c) {
    out[c].resize(P, patch_len);
    for (Index j = 0; j < P; ++j) {
      out[c].row(j) = window.col(c).segment(j * patch_len, patch_len).transpose();
    }
  }
  return out;
}

Index MaskSpec::masked_count() const noexcept {
  Index n = 0;
  for (const bool b : masked) n += b ? 1 : 0;
  return n;
}

Index mask_count(Index patches, double ratio) noexcept {
  const auto raw = static_cast<Index>(std::floor(ratio * static_cast<double>(patches) + 0.5));
  return std::clamp<Index>(raw, 1, std::max<Index>(1, patches - 1));
}

MaskSpec sample_mask(Index patches, double ratio, Rng& rng) {
  require(patches >= 2, ErrorCode::InvalidConfig, "masking needs at least 2 patches");
  require(ratio > 0.0 && ratio < 1.0, ErrorCode::InvalidConfig, "mask ratio must be in (0, 1)");
  MaskSpec mask{std::vector<bool>(static_cast<std::size_t>(patches), false), ratio};
  const auto chosen = rng.sample_without_replacement(static_cast<std::size_t>(patches),
                                                     static_cast<std::size_t>(mask_count(patches, ratio)));
  for (const auto j : chosen) mask.masked[j] = true;
  return mask;
}

// --- forward / losses -------------------------------------------------------

ForwardOutput forward(const EncoderModel& model, const Matrix& window) {
  Cache cache;
  return run_forward(model, window, nullptr, cache);
}

ForwardOutput forward(const EncoderModel& model, const Matrix& window, const MaskSpec& mask) {
  Cache cache;
  return run_forward(model, window, &mask, cache);
}

double masked_mse(const ForwardOutput& output, const Patches& target, const MaskSpec& mask) {
  check_loss_inputs(output, target, &mask, Loss::Masked);
  double value = 0.0;
  loss_seed(output, target, &mask, Loss::Masked, value);
  return value;
}

double full_mse(const ForwardOutput& output, const Patches& target) {
  check_target(output, target);
  double value = 0.0;
  loss_seed(output, target, nullptr, Loss::Full, value);
  return value;
}

double loss_value(const EncoderModel& model, const Matrix& window, const Patches& target,
                  const MaskSpec* mask, Loss loss) {
  Cache cache;
  const auto out = run_forward(model, window, mask, cache);
  return loss == Loss::Masked ? masked_mse(out, target, *mask) : full_mse(out, target);
}

// --- backward ---------------------------------------------------------------

GradientResult gradients(const EncoderModel& model, const Matrix& window, const Patches& target,
                         const MaskSpec* mask, Loss loss) {
  if (loss == Loss::Masked) {
    require(mask != nullptr, ErrorCode::NoMaskedPatches, "masked loss requires a mask");
  }
  Cache cache;
  const auto out = run_forward(model, window, mask, cache);
  check_loss_inputs(out, target, mask, loss);

  GradientResult result{0.0, Parameters::zeros(model.config)};
  auto& g = result.grads;
  const auto& p = model.params;
  const Index C = window.cols();
  const Index P = out.patches;
  const Index n_tokens = C * P;
  const Index D = model.config.d_model;
  const Index H = model.config.n_heads;
  const Index dh = D / H;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  Matrix d_recon = loss_seed(out, target, mask, loss, result.loss);
  // Undo the de-normalization: r = r_norm * scale_c + mean_c.
  for (Index c = 0; c < C; ++c) d_recon.middleRows(c * P, P) *= cache.scale(c);

  g.head_weight = cache.z.transpose() * d_recon;
  g.head_bias = d_recon.colwise().sum();
  Matrix dh_state = d_recon * p.head_weight.transpose();
  dh_state = layer_norm_backward(dh_state, p.final_gain, cache.final_norm, g.final_gain,
                                 g.final_bias);

  for (std::size_t li = p.layers.size(); li-- > 0;) {
    const auto& lp = p.layers[li];
    const auto& lc = cache.layers[li];
    auto& lg = g.layers[li];

    // Feed-forward residual branch.
    lg.w2 = lc.g.transpose() * dh_state;
    lg.b2 = dh_state.colwise().sum();
    Matrix dz1 = dh_state * lp.w2.transpose();
    for (Index i = 0; i < dz1.size(); ++i) dz1.data()[i] *= gelu_grad(lc.z1.data()[i]);
    lg.w1 = lc.b.transpose() * dz1;
    lg.b1 = dz1.colwise().sum();
    Matrix db = dz1 * lp.w1.transpose();
    dh_state += layer_norm_backward(db, lp.ln2_gain, lc.ln2, lg.ln2_gain, lg.ln2_bias);

    // Attention residual branch.
    lg.wo = lc.o.transpose() * dh_state;
    lg.bo = dh_state.colwise().sum();
    const Matrix d_o = dh_state * lp.wo.transpose();
    Matrix dq(n_tokens, D), dk(n_tokens, D), dv(n_tokens, D);
    for (Index hh = 0; hh < H; ++hh) {
      const Matrix& A = lc.probs[static_cast<std::size_t>(hh)];
      const auto d_oh = d_o.middleCols(hh * dh, dh);
      const Matrix dA = d_oh * lc.v.middleCols(hh * dh, dh).transpose();
      dv.middleCols(hh * dh, dh) = A.transpose() * d_oh;
      Matrix dS(n_tokens, n_tokens);
      for (Index r = 0; r < n_tokens; ++r) {
        const double dot = dA.row(r).dot(A.row(r));
        dS.row(r) = A.row(r).array() * (dA.row(r).array() - dot);
      }
      dS *= inv_sqrt_dh;
      dq.middleCols(hh * dh, dh) = dS * lc.k.middleCols(hh * dh, dh);
      dk.middleCols(hh * dh, dh) = dS.transpose() * lc.q.middleCols(hh * dh, dh);
    }
    lg.wq = lc.a.transpose() * dq;
    lg.bq = dq.colwise().sum();
    lg.wk = lc.a.transpose() * dk;
    lg.bk = dk.colwise().sum();
    lg.wv = lc.a.transpose() * dv;
    lg.bv = dv.colwise().sum();
    Matrix da = dq * lp.wq.transpose() + dk * lp.wk.transpose() + dv * lp.wv.transpose();
    dh_state += layer_norm_backward(da, lp.ln1_gain, lc.ln1, lg.ln1_gain, lg.ln1_bias);
  }

  g.position_table.topRows(n_tokens) = dh_state;
  for (Index t = 0; t < n_tokens; ++t) {
    if (cache.token_masked[static_cast<std::size_t>(t)]) {
      g.mask_embedding.row(0) += dh_state.row(t);
    } else {
      g.patch_weight += cache.tokens.row(t).transpose() * dh_state.row(t);
      g.patch_bias.row(0) += dh_state.row(t);
    }
  }
  return result;
}

GradientResult gradients(const EncoderModel& model, const Matrix& window, const MaskSpec& mask) {
  return gradients(model, window, patchify(window, model.config.patch_len), &mask, Loss::Masked);
}

}  // namespace tsvat::encoder
