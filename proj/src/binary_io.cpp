#include "tinyids/binary_io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>

namespace tinyids {

namespace {
constexpr std::uint8_t kMagic[4] = {'T', 'I', 'D', 'S'};

template <typename T>
void put_le(std::vector<std::uint8_t>& buf, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
}
}  // namespace

void ByteWriter::u16(std::uint16_t v) { put_le(buf_, v); }
void ByteWriter::u32(std::uint32_t v) { put_le(buf_, v); }
void ByteWriter::u64(std::uint64_t v) { put_le(buf_, v); }
void ByteWriter::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::str(std::string_view s) {
  if (s.size() > 0xFFFF) throw ArgumentError("string too long for u16 length prefix");
  u16(static_cast<std::uint16_t>(s.size()));
  buf_.insert(buf_.end(), s.begin(), s.end());
}

void ByteWriter::header(ArtifactKind kind) {
  buf_.insert(buf_.end(), std::begin(kMagic), std::end(kMagic));
  u8(kFormatVersion);
  u8(static_cast<std::uint8_t>(kind));
}

void ByteReader::need(std::size_t n) const {
  if (remaining() < n) {
    throw FormatError("truncated input: expected " + std::to_string(pos_ + n) +
                          " bytes, have " + std::to_string(data_.size()),
                      pos_);
  }
}

std::uint8_t ByteReader::u8() {
  need(1);
  return data_[pos_++];
}

std::uint16_t ByteReader::u16() {
  need(2);
  std::uint16_t v = static_cast<std::uint16_t>(data_[pos_] | (data_[pos_ + 1] << 8));
  pos_ += 2;
  return v;
}

std::uint32_t ByteReader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | data_[pos_ + i];
  pos_ += 4;
  return v;
}

std::uint64_t ByteReader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | data_[pos_ + i];
  pos_ += 8;
  return v;
}

float ByteReader::f32() { return std::bit_cast<float>(u32()); }
double ByteReader::f64() { return std::bit_cast<double>(u64()); }

std::string ByteReader::str() {
  const std::size_t n = u16();
  need(n);
  std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
  pos_ += n;
  return s;
}

void ByteReader::header(ArtifactKind expected) {
  need(6);
  if (std::memcmp(data_.data() + pos_, kMagic, 4) != 0) fail("bad magic, expected TIDS");
  pos_ += 4;
  const std::uint8_t version = u8();
  if (version != kFormatVersion) {
    pos_ -= 1;
    fail("unsupported format version " + std::to_string(version));
  }
  const std::uint8_t kind = u8();
  if (kind != static_cast<std::uint8_t>(expected)) {
    pos_ -= 1;
    fail("unexpected artifact kind " + std::to_string(kind) + ", wanted " +
         std::to_string(static_cast<int>(expected)));
  }
}

void ByteReader::expect_end() const {
  if (remaining() != 0) {
    throw FormatError(std::to_string(remaining()) + " trailing bytes after artifact", pos_);
  }
}

ArtifactKind peek_artifact_kind(std::span<const std::uint8_t> data) {
  if (data.size() < 6) {
    throw FormatError("truncated input: expected 6 header bytes, have " + std::to_string(data.size()),
                      data.size());
  }
  if (std::memcmp(data.data(), kMagic, 4) != 0) throw FormatError("bad magic, expected TIDS", 0);
  if (data[4] != kFormatVersion) {
    throw FormatError("unsupported format version " + std::to_string(data[4]), 4);
  }
  if (data[5] > static_cast<std::uint8_t>(ArtifactKind::forest)) {
    throw FormatError("unknown artifact kind " + std::to_string(data[5]), 5);
  }
  return static_cast<ArtifactKind>(data[5]);
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001B3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace tinyids
