#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <utility>

namespace matmon::net {

/// RAII TCP socket.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Socket& operator=(Socket&& o) noexcept;
  ~Socket();

  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;

  bool valid() const { return fd_ >= 0; }
  int fd() const { return fd_; }
  void close();

  /// Blocking send of the whole buffer; false on peer loss.
  bool send_all(std::string_view bytes);

  /// One recv; >0 bytes read, 0 on orderly shutdown, -1 on error,
  /// -2 when a nonblocking read would block.
  long recv_some(char* buf, std::size_t len);

  void set_nonblocking(bool on);

 private:
  int fd_ = -1;
};

/// Connects to host:port; invalid socket on failure.
Socket tcp_connect(const std::string& host, int port);

class Listener {
 public:
  /// Binds and listens; port 0 picks an ephemeral port. Throws io_error.
  static Listener bind_listen(const std::string& host, int port);

  int port() const { return port_; }
  int fd() const { return sock_.fd(); }
  Socket accept_conn();  // invalid socket when nothing is pending

 private:
  Socket sock_;
  int port_ = 0;
};

}  // namespace matmon::net
