#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stop_token>
#include <string>
#include <vector>

#include "tinyids/dataset.hpp"
#include "tinyids/model.hpp"

namespace tinyids::wire {

inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::size_t kHeaderSize = 10;  // magic, version, msg_type, u32 id/nonce
inline constexpr std::size_t kRequestFixedSize = 12;
inline constexpr std::size_t kReplySize = 25;
inline constexpr std::size_t kPingRequestSize = 10;
inline constexpr std::size_t kPingReplySize = 20;
inline constexpr std::size_t kMaxFeatures = 2048;
inline constexpr std::uint8_t kNoClass = 255;

enum class MsgType : std::uint8_t { ping = 0, request = 1, reply = 2 };

enum class Status : std::uint8_t { ok = 0, malformed = 1, dimension_mismatch = 2, model_not_loaded = 3 };

struct InferenceRequest {
  std::uint32_t sample_id = 0;
  std::vector<float> features;  // raw, pre-standardization
  friend bool operator==(const InferenceRequest&, const InferenceRequest&) = default;
};

// 24 bytes of fields followed by one reserved zero byte.
struct InferenceReply {
  std::uint32_t sample_id = 0;
  Status status = Status::ok;
  std::uint8_t predicted_class = 0;
  float confidence = 0.0f;
  std::uint32_t inference_time_us = 0;
  std::uint32_t memory_bytes = 0;
  friend bool operator==(const InferenceReply&, const InferenceReply&) = default;
};

struct PingRequest {
  std::uint32_t nonce = 0;
  friend bool operator==(const PingRequest&, const PingRequest&) = default;
};

struct PingReply {
  std::uint32_t nonce = 0;
  std::uint64_t model_digest = 0;
  std::uint16_t n_features = 0;
  friend bool operator==(const PingReply&, const PingReply&) = default;
};

// Encoders throw ArgumentError for out-of-range fields; decoders throw
// FormatError for short datagrams, bad magic/version/type or a wrong length.
std::vector<std::uint8_t> encode_request(const InferenceRequest& m);
InferenceRequest decode_request(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_reply(const InferenceReply& m);
InferenceReply decode_reply(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_ping(const PingRequest& m);
PingRequest decode_ping(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_ping_reply(const PingReply& m);
PingReply decode_ping_reply(std::span<const std::uint8_t> bytes);

/// UDP inference server. handle() is the pure per-datagram function; run()
/// is the serial receive loop around it.
class InferenceServer {
 public:
  InferenceServer() = default;  // no model: requests get status 3
  InferenceServer(AnyModel model, std::uint64_t model_digest);
  static InferenceServer from_file(const std::filesystem::path& model_path);
  ~InferenceServer();
  InferenceServer(InferenceServer&& other) noexcept;
  InferenceServer& operator=(InferenceServer&& other) noexcept;
  InferenceServer(const InferenceServer&) = delete;
  InferenceServer& operator=(const InferenceServer&) = delete;

  // Binds the UDP socket; port 0 picks an ephemeral port. Throws NetworkError.
  void bind(const std::string& address, std::uint16_t port);
  std::uint16_t port() const;
  // Serves until stop is requested.
  void run(std::stop_token stop);

  // Reply for one datagram, or nullopt when it is dropped.
  std::optional<std::vector<std::uint8_t>> handle(std::span<const std::uint8_t> datagram) const;

  std::uint64_t model_digest() const { return digest_; }
  std::size_t requests_served() const { return served_; }

 private:
  std::optional<AnyModel> model_;
  std::uint64_t digest_ = 0;
  int fd_ = -1;
  std::size_t served_ = 0;
};

struct ClientOptions {
  int timeout_ms = 200;
  int retries = 3;  // retransmissions after the first attempt
  // When set, the ping digest must match.
  std::optional<std::uint64_t> expected_digest;
};

struct ClientRow {
  std::uint32_t sample_id = 0;
  std::uint8_t true_label = 0;
  bool answered = false;
  InferenceReply reply;
  double rtt_us = 0.0;
  int attempts = 0;
};

struct ClientSummary {
  bool ping_ok = false;
  PingReply ping;
  std::vector<ClientRow> rows;
  std::size_t answered = 0;
  std::size_t lost = 0;
  std::size_t retransmits = 0;
  double mean_rtt_us = 0.0;
};

// Streams every row of `data` (raw features) to host:port, one datagram per
// sample. Never throws for lost samples; only for socket setup failures.
ClientSummary run_client(const LabeledData& data, const std::string& host, std::uint16_t port,
                         const ClientOptions& options);
void write_client_csv(const ClientSummary& summary, const std::filesystem::path& out);

// Splits "host:port"; throws ArgumentError.
std::pair<std::string, std::uint16_t> parse_endpoint(const std::string& text);

}  // namespace tinyids::wire
