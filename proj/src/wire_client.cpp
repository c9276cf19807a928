#include <netdb.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <chrono>
#include <cstring>
#include <fstream>
#include <thread>

#include "tinyids/error.hpp"
#include "tinyids/log.hpp"
#include "tinyids/wire.hpp"

namespace tinyids::wire {

namespace {

using clock = std::chrono::steady_clock;

class UdpSocket {
 public:
  UdpSocket(const std::string& host, std::uint16_t port) {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_DGRAM;
    addrinfo* res = nullptr;
    if (const int rc = ::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res); rc != 0) {
      throw NetworkError("cannot resolve '" + host + "': " + ::gai_strerror(rc));
    }
    fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
    if (fd_ < 0 || ::connect(fd_, res->ai_addr, res->ai_addrlen) != 0) {
      const int err = errno;
      ::freeaddrinfo(res);
      throw NetworkError("cannot open UDP socket to " + host + ": " + std::strerror(err));
    }
    ::freeaddrinfo(res);
  }
  ~UdpSocket() {
    if (fd_ >= 0) ::close(fd_);
  }
  UdpSocket(const UdpSocket&) = delete;
  UdpSocket& operator=(const UdpSocket&) = delete;

  // Send errors (e.g. an ICMP refusal from an earlier datagram) count as loss.
  void send(std::span<const std::uint8_t> bytes) { (void)::send(fd_, bytes.data(), bytes.size(), 0); }

  // Waits until `deadline` for one datagram; nullopt means timeout.
  std::optional<std::vector<std::uint8_t>> receive(clock::time_point deadline) {
    for (;;) {
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - clock::now()).count();
      if (left < 0) return std::nullopt;
      pollfd p{fd_, POLLIN, 0};
      const int rc = ::poll(&p, 1, static_cast<int>(left) + 1);
      if (rc < 0 && errno == EINTR) continue;
      if (rc <= 0) return std::nullopt;
      const ssize_t n = ::recv(fd_, buf_.data(), buf_.size(), 0);
      if (n < 0) {
        if (errno == EINTR) continue;
        // Nothing listening on the other end: behave like a timeout.
        std::this_thread::sleep_until(deadline);
        return std::nullopt;
      }
      return std::vector<std::uint8_t>(buf_.begin(), buf_.begin() + n);
    }
  }

 private:
  int fd_ = -1;
  std::vector<std::uint8_t> buf_ = std::vector<std::uint8_t>(65536);
};

std::string num(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

ClientSummary run_client(const LabeledData& data, const std::string& host, std::uint16_t port,
                         const ClientOptions& options) {
  if (options.timeout_ms <= 0) throw ArgumentError("timeout must be positive");
  if (options.retries < 0) throw ArgumentError("retries must be >= 0");
  if (data.n_features > kMaxFeatures) throw ArgumentError("too many features for the wire format");
  UdpSocket sock(host, port);
  const auto timeout = std::chrono::milliseconds(options.timeout_ms);
  const int max_attempts = 1 + options.retries;

  ClientSummary summary;
  summary.rows.resize(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    summary.rows[i].sample_id = static_cast<std::uint32_t>(i);
    summary.rows[i].true_label = data.labels[i];
  }

  const std::uint32_t nonce = 0x5EED0000u ^ static_cast<std::uint32_t>(data.size());
  for (int attempt = 0; attempt < max_attempts && !summary.ping_ok; ++attempt) {
    sock.send(encode_ping({nonce}));
    const auto deadline = clock::now() + timeout;
    while (auto dgram = sock.receive(deadline)) {
      if (dgram->size() != kPingReplySize) continue;
      try {
        const auto p = decode_ping_reply(*dgram);
        if (p.nonce != nonce) continue;
        summary.ping = p;
        summary.ping_ok = true;
        break;
      } catch (const FormatError&) {
      }
    }
  }
  if (!summary.ping_ok) {
    log::warn("no ping reply from " + host + ":" + std::to_string(port) + "; marking all samples lost");
    summary.lost = data.size();
    return summary;
  }
  if (summary.ping.n_features != data.n_features) {
    throw DataError("server model expects " + std::to_string(summary.ping.n_features) + " features, data has " +
                    std::to_string(data.n_features));
  }
  if (options.expected_digest && *options.expected_digest != summary.ping.model_digest) {
    throw DataError("server model digest " + hex64(summary.ping.model_digest) + " does not match expected " +
                    hex64(*options.expected_digest));
  }

  double rtt_sum = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto& row = summary.rows[i];
    InferenceRequest req;
    req.sample_id = row.sample_id;
    const auto x = data.row(i);
    req.features.assign(x.begin(), x.end());
    const auto bytes = encode_request(req);
    for (int attempt = 1; attempt <= max_attempts && !row.answered; ++attempt) {
      row.attempts = attempt;
      const auto sent = clock::now();
      sock.send(bytes);
      const auto deadline = sent + timeout;
      while (auto dgram = sock.receive(deadline)) {
        if (dgram->size() != kReplySize) continue;
        InferenceReply reply;
        try {
          reply = decode_reply(*dgram);
        } catch (const FormatError&) {
          continue;
        }
        // Late or duplicated replies for earlier samples are ignored.
        if (reply.sample_id != row.sample_id) continue;
        row.reply = reply;
        row.answered = true;
        row.rtt_us = std::chrono::duration<double, std::micro>(clock::now() - sent).count();
        break;
      }
    }
    if (row.answered) {
      ++summary.answered;
      rtt_sum += row.rtt_us;
      summary.retransmits += static_cast<std::size_t>(row.attempts - 1);
    } else {
      ++summary.lost;
      summary.retransmits += static_cast<std::size_t>(max_attempts - 1);
    }
  }
  summary.mean_rtt_us = summary.answered ? rtt_sum / static_cast<double>(summary.answered) : 0.0;
  return summary;
}

void write_client_csv(const ClientSummary& summary, const std::filesystem::path& out) {
  if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
  std::ofstream f(out, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write " + out.string());
  f << "sample_id,true_label,predicted_class,confidence,inference_time_us,memory_bytes,rtt_us,attempts\n";
  for (const auto& r : summary.rows) {
    f << r.sample_id << ',' << static_cast<int>(r.true_label) << ',';
    if (r.answered) {
      f << static_cast<int>(r.reply.predicted_class) << ',' << num(r.reply.confidence) << ','
        << r.reply.inference_time_us << ',' << r.reply.memory_bytes << ',' << num(r.rtt_us) << ',' << r.attempts;
    } else {
      f << "lost,,,,," << r.attempts;
    }
    f << '\n';
  }
  f << "# summary: answered=" << summary.answered << " lost=" << summary.lost
    << " retransmits=" << summary.retransmits << " mean_rtt_us=" << num(summary.mean_rtt_us) << '\n';
  if (!f) throw DataError("write failed for " + out.string());
}

}  // namespace tinyids::wire
