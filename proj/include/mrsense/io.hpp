#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "mrsense/numerics.hpp"

namespace mrsense {

/// In-memory image of an MDM1 file: "MDM1", u64 rows, u64 cols, then
/// rows*cols little-endian f64 values in column-major order. An optional
/// trailer starts with a flags byte; bit 0 announces a rows*cols byte mask
/// (nonzero = valid), bit 1 a u64 length followed by provenance JSON.
struct MatrixFile {
  RealMatrix data;
  std::vector<std::uint8_t> mask;  // empty when absent
  std::string provenance;          // empty when absent
};

/// NaN is rejected unless a mask marks the entry invalid.
std::string encode_matrix(const MatrixFile& file);
MatrixFile decode_matrix(std::string_view bytes);

void write_matrix_file(const std::filesystem::path& path, const MatrixFile& file);
MatrixFile read_matrix_file(const std::filesystem::path& path);
RealMatrix read_matrix(const std::filesystem::path& path);

std::string read_bytes(const std::filesystem::path& path);
void write_bytes(const std::filesystem::path& path, std::string_view bytes);

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Fixed-format rendering of a double that round-trips exactly.
std::string format_double(double v);

}  // namespace mrsense
