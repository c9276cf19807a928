#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>

#include "tinyids/error.hpp"
#include "tinyids/log.hpp"
#include "tinyids/wire.hpp"

namespace tinyids::wire {

namespace {

std::vector<std::uint8_t> status_reply(std::uint32_t id, Status status) {
  InferenceReply r;
  r.sample_id = id;
  r.status = status;
  r.predicted_class = kNoClass;
  r.confidence = 0.0f;
  return encode_reply(r);
}

std::uint32_t read_u32_at(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) | static_cast<std::uint32_t>(b[at + 1]) << 8 |
         static_cast<std::uint32_t>(b[at + 2]) << 16 | static_cast<std::uint32_t>(b[at + 3]) << 24;
}

}  // namespace

InferenceServer::InferenceServer(AnyModel model, std::uint64_t model_digest)
    : model_(std::move(model)), digest_(model_digest) {}

InferenceServer InferenceServer::from_file(const std::filesystem::path& model_path) {
  const auto bytes = read_file_bytes(model_path);
  return InferenceServer(deserialize_model(bytes), fnv1a64(bytes));
}

InferenceServer::~InferenceServer() {
  if (fd_ >= 0) ::close(fd_);
}

InferenceServer::InferenceServer(InferenceServer&& other) noexcept
    : model_(std::move(other.model_)), digest_(other.digest_), fd_(other.fd_), served_(other.served_) {
  other.fd_ = -1;
}

InferenceServer& InferenceServer::operator=(InferenceServer&& other) noexcept {
  if (this != &other) {
    if (fd_ >= 0) ::close(fd_);
    model_ = std::move(other.model_);
    digest_ = other.digest_;
    fd_ = other.fd_;
    served_ = other.served_;
    other.fd_ = -1;
  }
  return *this;
}

void InferenceServer::bind(const std::string& address, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_DGRAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  const std::string port_text = std::to_string(port);
  if (const int rc = ::getaddrinfo(address.empty() ? nullptr : address.c_str(), port_text.c_str(), &hints, &res);
      rc != 0) {
    throw NetworkError("cannot resolve bind address '" + address + "': " + ::gai_strerror(rc));
  }
  const int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (fd < 0) {
    ::freeaddrinfo(res);
    throw NetworkError(std::string("socket: ") + std::strerror(errno));
  }
  if (::bind(fd, res->ai_addr, res->ai_addrlen) != 0) {
    const int err = errno;
    ::freeaddrinfo(res);
    ::close(fd);
    throw NetworkError("cannot bind " + address + ":" + port_text + ": " + std::strerror(err));
  }
  ::freeaddrinfo(res);
  if (fd_ >= 0) ::close(fd_);
  fd_ = fd;
}

std::uint16_t InferenceServer::port() const {
  if (fd_ < 0) return 0;
  sockaddr_in addr{};
  socklen_t len = sizeof addr;
  if (::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len) != 0) return 0;
  return ntohs(addr.sin_port);
}

std::optional<std::vector<std::uint8_t>> InferenceServer::handle(std::span<const std::uint8_t> datagram) const {
  if (datagram.size() < kHeaderSize || std::memcmp(datagram.data(), "TIDS", 4) != 0) return std::nullopt;
  const std::uint32_t id = read_u32_at(datagram, 6);
  const auto type = datagram[5];
  if (datagram[4] != kVersion) return status_reply(id, Status::malformed);

  if (type == static_cast<std::uint8_t>(MsgType::ping)) {
    if (datagram.size() != kPingRequestSize) return status_reply(id, Status::malformed);
    PingReply p;
    p.nonce = id;
    p.model_digest = digest_;
    p.n_features = model_ ? static_cast<std::uint16_t>(input_features(*model_)) : 0;
    return encode_ping_reply(p);
  }
  if (type != static_cast<std::uint8_t>(MsgType::request)) return status_reply(id, Status::malformed);

  InferenceRequest req;
  try {
    req = decode_request(datagram);
  } catch (const FormatError&) {
    return status_reply(id, Status::malformed);
  }
  if (!model_) return status_reply(id, Status::model_not_loaded);
  if (req.features.size() != input_features(*model_)) return status_reply(id, Status::dimension_mismatch);

  std::vector<double> raw(req.features.begin(), req.features.end());
  for (double v : raw) {
    if (!std::isfinite(v)) return status_reply(id, Status::malformed);
  }
  const auto t0 = std::chrono::steady_clock::now();
  const Inference result = infer(*model_, raw);
  const auto t1 = std::chrono::steady_clock::now();

  InferenceReply reply;
  reply.sample_id = id;
  reply.status = Status::ok;
  reply.predicted_class = result.predicted_class;
  reply.confidence = static_cast<float>(result.confidence);
  reply.inference_time_us = static_cast<std::uint32_t>(
      std::llround(std::chrono::duration<double, std::micro>(t1 - t0).count()));
  reply.memory_bytes = static_cast<std::uint32_t>(working_set_bytes(*model_));
  return encode_reply(reply);
}

void InferenceServer::run(std::stop_token stop) {
  if (fd_ < 0) throw NetworkError("server socket is not bound");
  std::vector<std::uint8_t> buf(65536);
  while (!stop.stop_requested()) {
    pollfd p{fd_, POLLIN, 0};
    const int rc = ::poll(&p, 1, 50);
    if (rc < 0) {
      if (errno == EINTR) continue;
      throw NetworkError(std::string("poll: ") + std::strerror(errno));
    }
    if (rc == 0) continue;
    sockaddr_storage from{};
    socklen_t from_len = sizeof from;
    const ssize_t n = ::recvfrom(fd_, buf.data(), buf.size(), 0, reinterpret_cast<sockaddr*>(&from), &from_len);
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      log::warn(std::string("recvfrom: ") + std::strerror(errno));
      continue;
    }
    const auto reply = handle(std::span<const std::uint8_t>(buf.data(), static_cast<std::size_t>(n)));
    if (!reply) continue;
    ++served_;
    if (::sendto(fd_, reply->data(), reply->size(), 0, reinterpret_cast<sockaddr*>(&from), from_len) < 0) {
      log::warn(std::string("sendto: ") + std::strerror(errno));
    }
  }
}

}  // namespace tinyids::wire
