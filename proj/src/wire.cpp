#include <cstring>

#include "tinyids/binary_io.hpp"
#include "tinyids/error.hpp"
#include "tinyids/wire.hpp"

namespace tinyids::wire {

namespace {

constexpr std::uint8_t kMagic[4] = {'T', 'I', 'D', 'S'};

void put_header(ByteWriter& w, MsgType type) {
  for (auto b : kMagic) w.u8(b);
  w.u8(kVersion);
  w.u8(static_cast<std::uint8_t>(type));
}

// Checks magic, version, type and exact length; leaves `r` after the type byte.
void check_header(ByteReader& r, std::span<const std::uint8_t> bytes, MsgType type, std::size_t min_size) {
  if (bytes.size() < min_size) {
    throw FormatError("short datagram: " + std::to_string(bytes.size()) + " bytes, need at least " +
                      std::to_string(min_size),
                      bytes.size());
  }
  for (auto b : kMagic) {
    if (r.u8() != b) throw FormatError("bad magic", 0);
  }
  if (r.u8() != kVersion) throw FormatError("unsupported version", 4);
  if (r.u8() != static_cast<std::uint8_t>(type)) throw FormatError("unexpected message type", 5);
}

void check_length(std::span<const std::uint8_t> bytes, std::size_t expected) {
  if (bytes.size() != expected) {
    throw FormatError("datagram length " + std::to_string(bytes.size()) + ", expected " + std::to_string(expected),
                      std::min(bytes.size(), expected));
  }
}

}  // namespace

std::vector<std::uint8_t> encode_request(const InferenceRequest& m) {
  if (m.features.size() > kMaxFeatures) throw ArgumentError("request carries more than 2048 features");
  ByteWriter w;
  put_header(w, MsgType::request);
  w.u32(m.sample_id);
  w.u16(static_cast<std::uint16_t>(m.features.size()));
  for (float f : m.features) w.f32(f);
  return std::move(w).take();
}

InferenceRequest decode_request(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  check_header(r, bytes, MsgType::request, kRequestFixedSize);
  InferenceRequest m;
  m.sample_id = r.u32();
  const std::size_t n = r.u16();
  if (n > kMaxFeatures) throw FormatError("request declares more than 2048 features", 10);
  check_length(bytes, kRequestFixedSize + 4 * n);
  m.features.resize(n);
  for (auto& f : m.features) f = r.f32();
  return m;
}

std::vector<std::uint8_t> encode_reply(const InferenceReply& m) {
  if (static_cast<std::uint8_t>(m.status) > 3) throw ArgumentError("invalid reply status");
  ByteWriter w;
  put_header(w, MsgType::reply);
  w.u32(m.sample_id);
  w.u8(static_cast<std::uint8_t>(m.status));
  w.u8(m.predicted_class);
  w.f32(m.confidence);
  w.u32(m.inference_time_us);
  w.u32(m.memory_bytes);
  w.u8(0);  // reserved
  return std::move(w).take();
}

InferenceReply decode_reply(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  check_header(r, bytes, MsgType::reply, kHeaderSize);
  check_length(bytes, kReplySize);
  InferenceReply m;
  m.sample_id = r.u32();
  const std::uint8_t status = r.u8();
  if (status > 3) throw FormatError("invalid reply status", 10);
  m.status = static_cast<Status>(status);
  m.predicted_class = r.u8();
  m.confidence = r.f32();
  m.inference_time_us = r.u32();
  m.memory_bytes = r.u32();
  r.u8();
  return m;
}

std::vector<std::uint8_t> encode_ping(const PingRequest& m) {
  ByteWriter w;
  put_header(w, MsgType::ping);
  w.u32(m.nonce);
  return std::move(w).take();
}

PingRequest decode_ping(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  check_header(r, bytes, MsgType::ping, kHeaderSize);
  check_length(bytes, kPingRequestSize);
  return {r.u32()};
}

std::vector<std::uint8_t> encode_ping_reply(const PingReply& m) {
  ByteWriter w;
  put_header(w, MsgType::ping);
  w.u32(m.nonce);
  w.u64(m.model_digest);
  w.u16(m.n_features);
  return std::move(w).take();
}

PingReply decode_ping_reply(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  check_header(r, bytes, MsgType::ping, kHeaderSize);
  check_length(bytes, kPingReplySize);
  PingReply m;
  m.nonce = r.u32();
  m.model_digest = r.u64();
  m.n_features = r.u16();
  return m;
}

std::pair<std::string, std::uint16_t> parse_endpoint(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == text.size()) {
    throw ArgumentError("expected host:port, got '" + text + "'");
  }
  const std::string port_text = text.substr(colon + 1);
  unsigned long port = 0;
  try {
    std::size_t used = 0;
    port = std::stoul(port_text, &used);
    if (used != port_text.size()) throw std::invalid_argument("trailing");
  } catch (const std::exception&) {
    throw ArgumentError("invalid port in '" + text + "'");
  }
  if (port == 0 || port > 65535) throw ArgumentError("port out of range in '" + text + "'");
  return {text.substr(0, colon), static_cast<std::uint16_t>(port)};
}

}  // namespace tinyids::wire
