#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "tsvat/error.hpp"

// Explicit little-endian encoding independent of the host byte order.
namespace tsvat::binary {

template <class UInt>
void write_le(std::ostream& out, UInt value) {
  std::array<char, sizeof(UInt)> bytes{};
  for (std::size_t i = 0; i < sizeof(UInt); ++i) {
    bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  }
  out.write(bytes.data(), bytes.size());
}

template <class UInt>
UInt read_le(std::istream& in) {
  std::array<char, sizeof(UInt)> bytes{};
  in.read(bytes.data(), bytes.size());
  require(in.gcount() == static_cast<std::streamsize>(bytes.size()), ErrorCode::ParseError,
          "unexpected end of binary stream");
  UInt value = 0;
  for (std::size_t i = 0; i < sizeof(UInt); ++i) {
    value |= static_cast<UInt>(static_cast<unsigned char>(bytes[i])) << (8 * i);
  }
  return value;
}

inline void write_f64(std::ostream& out, double value) {
  write_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(value));
}

inline double read_f64(std::istream& in) {
  return std::bit_cast<double>(read_le<std::uint64_t>(in));
}

inline void write_string(std::ostream& out, const std::string& s) {
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in, std::size_t max_len = 1u << 20) {
  const auto len = read_le<std::uint32_t>(in);
  require(len <= max_len, ErrorCode::ParseError, "string length out of range");
  std::string s(len, '\0');
  in.read(s.data(), len);
  require(in.gcount() == static_cast<std::streamsize>(len), ErrorCode::ParseError,
          "unexpected end of binary stream");
  return s;
}

}  // namespace tsvat::binary
