#include "tsvat/matrix_io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "tsvat/binary_io.hpp"
#include "tsvat/error.hpp"

namespace tsvat::binary {
namespace {

constexpr char kMagic[4] = {'T', 'S', 'V', 'M'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint64_t kMaxEntries = std::uint64_t{1} << 32;

}  // namespace

void write_matrix(std::ostream& out, const Matrix& m) {
  out.write(kMagic, sizeof kMagic);
  write_le<std::uint32_t>(out, kVersion);
  write_le<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
  write_le<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
  for (Index i = 0; i < m.size(); ++i) write_f64(out, m.data()[i]);
  require(out.good(), ErrorCode::IoError, "matrix write failed");
}

Matrix read_matrix(std::istream& in) {
  char magic[4];
  in.read(magic, sizeof magic);
  require(in.gcount() == 4 && std::memcmp(magic, kMagic, 4) == 0, ErrorCode::ParseError,
          "not a matrix stream (bad magic)");
  const auto version = read_le<std::uint32_t>(in);
  require(version == kVersion, ErrorCode::ParseError,
          "unsupported matrix version " + std::to_string(version));
  const auto rows = read_le<std::uint64_t>(in);
  const auto cols = read_le<std::uint64_t>(in);
  require(cols == 0 || rows <= kMaxEntries / cols, ErrorCode::ParseError,
          "matrix dimensions out of range");
  Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = read_f64(in);
  return m;
}

std::vector<std::uint8_t> matrix_bytes(const Matrix& m) {
  std::ostringstream out(std::ios::binary);
  write_matrix(out, m);
  const std::string s = std::move(out).str();
  return {s.begin(), s.end()};
}

Matrix matrix_from_bytes(const std::vector<std::uint8_t>& bytes) {
  std::istringstream in(std::string(bytes.begin(), bytes.end()), std::ios::binary);
  Matrix m = read_matrix(in);
  require(in.peek() == std::char_traits<char>::eof(), ErrorCode::ParseError,
          "trailing bytes after matrix payload");
  return m;
}

void write_matrix_file(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.is_open(), ErrorCode::IoError, "cannot open " + path.string());
  write_matrix(out, m);
}

Matrix read_matrix_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.is_open(), ErrorCode::IoError, "cannot open " + path.string());
  return read_matrix(in);
}

}  // namespace tsvat::binary
