#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "tsvat/types.hpp"

namespace tsvat::binary {

// "TSVM", u32 version, u64 rows, u64 cols, then row-major f64, all little-endian.
void write_matrix(std::ostream& out, const Matrix& m);
Matrix read_matrix(std::istream& in);

std::vector<std::uint8_t> matrix_bytes(const Matrix& m);
Matrix matrix_from_bytes(const std::vector<std::uint8_t>& bytes);

void write_matrix_file(const std::filesystem::path& path, const Matrix& m);
Matrix read_matrix_file(const std::filesystem::path& path);

}  // namespace tsvat::binary
