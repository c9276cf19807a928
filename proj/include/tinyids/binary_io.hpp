#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tinyids/error.hpp"

namespace tinyids {

// Artifact kinds sharing the `TIDS` header.
enum class ArtifactKind : std::uint8_t {
  dataset = 0,
  float_mlp = 1,
  quant_mlp = 2,
  forest = 3,
};

inline constexpr std::uint8_t kFormatVersion = 1;

/// Little-endian byte sink.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void i8(std::int8_t v) { buf_.push_back(static_cast<std::uint8_t>(v)); }
  void u16(std::uint16_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void f64(double v);
  // u16 length prefix followed by UTF-8 bytes.
  void str(std::string_view s);
  void bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
  void header(ArtifactKind kind);

  const std::vector<std::uint8_t>& data() const& { return buf_; }
  std::vector<std::uint8_t> take() && { return std::move(buf_); }
  std::size_t size() const { return buf_.size(); }

 private:
  std::vector<std::uint8_t> buf_;
};

/// Bounds-checked little-endian reader; every failure is a FormatError with offset.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  std::uint8_t u8();
  std::int8_t i8() { return static_cast<std::int8_t>(u8()); }
  std::uint16_t u16();
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  double f64();
  std::string str();
  // Reads and validates magic + version, and checks the artifact kind.
  void header(ArtifactKind expected);

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }
  void expect_end() const;
  [[noreturn]] void fail(const std::string& what) const { throw FormatError(what, pos_); }

 private:
  void need(std::size_t n) const;

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

// Peeks at the artifact kind without consuming; throws FormatError on a bad header.
ArtifactKind peek_artifact_kind(std::span<const std::uint8_t> data);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);
std::string hex64(std::uint64_t v);

}  // namespace tinyids
