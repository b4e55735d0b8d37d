#include "mrsense/io.hpp"

#include <openssl/evp.h>

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <memory>

#include "mrsense/diagnostics.hpp"

namespace mrsense {

namespace {

constexpr std::string_view kMagic = "MDM1";
constexpr std::uint8_t kHasMask = 0x1;
constexpr std::uint8_t kHasProvenance = 0x2;

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64(std::string_view bytes, size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[at + i])) << (8 * i);
  return v;
}

void require(bool ok, const char* what) {
  if (!ok) throw ConfigError(std::string("malformed matrix file: ") + what);
}

}  // namespace

std::string encode_matrix(const MatrixFile& file) {
  const RealMatrix& A = file.data;
  const auto count = static_cast<size_t>(A.size());
  if (!file.mask.empty() && file.mask.size() != count) throw ConfigError("matrix mask length must equal rows * cols");
  for (size_t i = 0; i < count; ++i) {
    if (std::isnan(A.data()[i]) && (file.mask.empty() || file.mask[i] != 0)) {
      throw ConfigError("NaN entries require a mask marking them invalid");
    }
  }
  std::string out;
  out.reserve(kMagic.size() + 16 + 8 * count + file.mask.size() + file.provenance.size() + 9);
  out.append(kMagic);
  put_u64(out, static_cast<std::uint64_t>(A.rows()));
  put_u64(out, static_cast<std::uint64_t>(A.cols()));
  for (size_t i = 0; i < count; ++i) put_u64(out, std::bit_cast<std::uint64_t>(A.data()[i]));

  std::uint8_t flags = 0;
  if (!file.mask.empty()) flags |= kHasMask;
  if (!file.provenance.empty()) flags |= kHasProvenance;
  if (flags != 0) {
    out.push_back(static_cast<char>(flags));
    if (flags & kHasMask) out.append(reinterpret_cast<const char*>(file.mask.data()), file.mask.size());
    if (flags & kHasProvenance) {
      put_u64(out, file.provenance.size());
      out.append(file.provenance);
    }
  }
  return out;
}

MatrixFile decode_matrix(std::string_view bytes) {
  require(bytes.size() >= 20, "truncated header");
  require(bytes.substr(0, 4) == kMagic, "bad magic");
  const std::uint64_t rows = get_u64(bytes, 4);
  const std::uint64_t cols = get_u64(bytes, 12);
  require(rows < (1ULL << 32) && cols < (1ULL << 32), "implausible dimensions");
  const std::uint64_t count = rows * cols;
  size_t at = 20;
  require(bytes.size() - at >= 8 * count, "payload shorter than header");

  MatrixFile file;
  file.data.resize(static_cast<Index>(rows), static_cast<Index>(cols));
  for (std::uint64_t i = 0; i < count; ++i, at += 8) file.data.data()[i] = std::bit_cast<double>(get_u64(bytes, at));

  if (at < bytes.size()) {
    const auto flags = static_cast<std::uint8_t>(bytes[at++]);
    require((flags & ~(kHasMask | kHasProvenance)) == 0, "unknown trailer flags");
    if (flags & kHasMask) {
      require(bytes.size() - at >= count, "truncated mask");
      file.mask.assign(reinterpret_cast<const std::uint8_t*>(bytes.data() + at),
                       reinterpret_cast<const std::uint8_t*>(bytes.data() + at + count));
      at += count;
    }
    if (flags & kHasProvenance) {
      require(bytes.size() - at >= 8, "truncated provenance length");
      const std::uint64_t len = get_u64(bytes, at);
      at += 8;
      require(bytes.size() - at >= len, "truncated provenance");
      file.provenance.assign(bytes.substr(at, len));
      at += len;
    }
  }
  require(at == bytes.size(), "trailing bytes");
  for (std::uint64_t i = 0; i < count; ++i) {
    require(!std::isnan(file.data.data()[i]) || (!file.mask.empty() && file.mask[i] == 0), "NaN without mask");
  }
  return file;
}

std::string read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ConfigError("write failed for " + path.string());
}

void write_matrix_file(const std::filesystem::path& path, const MatrixFile& file) {
  write_bytes(path, encode_matrix(file));
}

MatrixFile read_matrix_file(const std::filesystem::path& path) { return decode_matrix(read_bytes(path)); }

RealMatrix read_matrix(const std::filesystem::path& path) { return read_matrix_file(path).data; }

std::string sha256_hex(std::string_view bytes) {
  const std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest.data(), &len) != 1) {
    throw NumericalError("sha256 failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xF]);
  }
  return out;
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_bytes(path)); }

std::string format_double(double v) {
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return {buf.data(), res.ptr};
}

}  // namespace mrsense
