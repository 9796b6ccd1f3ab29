#include <cstring>
#include <map>
#include <sstream>

#include "tsvat/binary_io.hpp"
#include "tsvat/encoder.hpp"

namespace tsvat::encoder {
namespace {

constexpr char kMagic[8] = {'T', 'S', 'V', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

void write_checkpoint(std::ostream& out, const EncoderModel& model) {
  using namespace binary;
  out.write(kMagic, sizeof kMagic);
  write_le<std::uint32_t>(out, kVersion);
  const auto& c = model.config;
  for (const Index v : {c.patch_len, c.d_model, c.n_layers, c.n_heads, c.ffn_dim, c.max_patches}) {
    write_le<std::uint64_t>(out, static_cast<std::uint64_t>(v));
  }
  write_le<std::uint64_t>(out, c.seed);

  std::uint32_t count = 0;
  model.params.for_each([&](const std::string&, const Matrix&) { ++count; });
  write_le<std::uint32_t>(out, count);
  model.params.for_each([&](const std::string& name, const Matrix& m) {
    write_string(out, name);
    write_le<std::uint32_t>(out, 2);
    write_le<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
    write_le<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
    for (Index i = 0; i < m.size(); ++i) write_f64(out, m.data()[i]);
  });
  require(out.good(), ErrorCode::IoError, "checkpoint write failed");
}

EncoderModel read_checkpoint(std::istream& in) {
  using namespace binary;
  char magic[8];
  in.read(magic, sizeof magic);
  require(in.gcount() == 8 && std::memcmp(magic, kMagic, 8) == 0, ErrorCode::ParseError,
          "not a checkpoint (bad magic)");
  const auto version = read_le<std::uint32_t>(in);
  require(version == kVersion, ErrorCode::ParseError,
          "unsupported checkpoint version " + std::to_string(version));
  EncoderConfig cfg;
  for (Index* v : {&cfg.patch_len, &cfg.d_model, &cfg.n_layers, &cfg.n_heads, &cfg.ffn_dim,
                   &cfg.max_patches}) {
    *v = static_cast<Index>(read_le<std::uint64_t>(in));
  }
  cfg.seed = read_le<std::uint64_t>(in);
  cfg.validate();

  EncoderModel model{cfg, Parameters::zeros(cfg)};
  const auto count = read_le<std::uint32_t>(in);
  std::map<std::string, Matrix*> slots;
  model.params.for_each([&](const std::string& name, Matrix& m) { slots[name] = &m; });
  require(count == slots.size(), ErrorCode::ParseError, "checkpoint tensor count mismatch");
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name = read_string(in, 256);
    const auto it = slots.find(name);
    require(it != slots.end(), ErrorCode::ParseError, "unknown tensor '" + name + "'");
    const auto ndim = read_le<std::uint32_t>(in);
    require(ndim == 2, ErrorCode::ParseError, "tensor '" + name + "' is not 2-D");
    const auto rows = static_cast<Index>(read_le<std::uint64_t>(in));
    const auto cols = static_cast<Index>(read_le<std::uint64_t>(in));
    Matrix& m = *it->second;
    require(rows == m.rows() && cols == m.cols(), ErrorCode::ParseError,
            "tensor '" + name + "' shape does not match config");
    for (Index k = 0; k < m.size(); ++k) m.data()[k] = read_f64(in);
    slots.erase(it);
  }
  require(model.params.all_finite(), ErrorCode::ParseError, "checkpoint has non-finite values");
  return model;
}

std::vector<std::uint8_t> checkpoint_bytes(const EncoderModel& model) {
  std::ostringstream out(std::ios::binary);
  write_checkpoint(out, model);
  const auto s = out.str();
  return {s.begin(), s.end()};
}

EncoderModel checkpoint_from_bytes(const std::vector<std::uint8_t>& bytes) {
  std::istringstream in(std::string(bytes.begin(), bytes.end()), std::ios::binary);
  return read_checkpoint(in);
}

}  // namespace tsvat::encoder
