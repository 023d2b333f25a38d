#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace tg {

struct ProtocolError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Frames are a 4-byte big-endian payload length followed by the UTF-8 payload.
inline constexpr std::uint32_t kMaxFrameBytes = 64u << 20;

std::string encode_frame(std::string_view payload);

/// Incremental decoder for a byte stream of frames.
class FrameDecoder {
 public:
  void feed(std::string_view bytes);
  /// Next complete payload; throws ProtocolError on an oversized length.
  std::optional<std::string> next();
  std::size_t buffered() const { return buf_.size() - pos_; }

 private:
  std::string buf_;
  std::size_t pos_ = 0;
};

/// Owning file descriptor.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& o) noexcept : fd_(o.release()) {}
  Socket& operator=(Socket&& o) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket() { close(); }

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  int release() {
    int f = fd_;
    fd_ = -1;
    return f;
  }
  void close();
  /// Wakes any thread blocked on the socket without releasing the descriptor.
  void shutdown();

 private:
  int fd_ = -1;
};

struct HostPort {
  std::string host = "127.0.0.1";
  int port = 0;
};
HostPort parse_host_port(std::string_view s);  // "host:port"; throws std::invalid_argument

/// Listening socket; port 0 picks an ephemeral port, reported through `bound`.
Socket listen_tcp(const HostPort& at, int* bound = nullptr);
Socket connect_tcp(const HostPort& to, std::chrono::milliseconds timeout);

/// Writes one frame completely; false once the peer is gone.
bool send_frame(int fd, std::string_view payload);

/// Blocking read of one frame; nullopt on EOF or error.
std::optional<std::string> recv_frame(int fd, FrameDecoder& dec);

}  // namespace tg
