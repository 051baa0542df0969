#pragma once

// Thin RAII wrappers over POSIX datagram and stream sockets (IPv4).

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hapticmesh/error.hpp"

namespace hapticmesh::net {

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;

  bool operator==(const Endpoint&) const = default;
  [[nodiscard]] std::string str() const { return host + ":" + std::to_string(port); }
};

// "host:port"; a bare port means 127.0.0.1.
inline Endpoint parse_endpoint(const std::string& text, std::uint16_t default_port = 0) {
  Endpoint e;
  const auto colon = text.rfind(':');
  std::string port_text;
  if (colon == std::string::npos) {
    if (!text.empty() && text.find_first_not_of("0123456789") == std::string::npos) {
      port_text = text;
    } else {
      e.host = text;
    }
  } else {
    e.host = text.substr(0, colon);
    port_text = text.substr(colon + 1);
  }
  if (e.host.empty()) e.host = "0.0.0.0";
  if (port_text.empty()) {
    e.port = default_port;
  } else {
    unsigned long p = 0;
    try {
      p = std::stoul(port_text);
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidConfig, "bad port in \"" + text + "\"");
    }
    if (p > 65535) throw Error(ErrorCode::InvalidConfig, "port out of range in \"" + text + "\"");
    e.port = static_cast<std::uint16_t>(p);
  }
  return e;
}

inline sockaddr_in to_sockaddr(const Endpoint& e) {
  sockaddr_in a{};
  a.sin_family = AF_INET;
  a.sin_port = htons(e.port);
  if (inet_pton(AF_INET, e.host.c_str(), &a.sin_addr) != 1) {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    addrinfo* res = nullptr;
    if (getaddrinfo(e.host.c_str(), nullptr, &hints, &res) != 0 || res == nullptr) {
      throw Error(ErrorCode::InvalidConfig, "cannot resolve host \"" + e.host + "\"");
    }
    a.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
    freeaddrinfo(res);
  }
  return a;
}

inline Endpoint from_sockaddr(const sockaddr_in& a) {
  char buf[INET_ADDRSTRLEN] = {};
  inet_ntop(AF_INET, &a.sin_addr, buf, sizeof buf);
  return {buf, ntohs(a.sin_port)};
}

class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  Socket(Socket&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Socket& operator=(Socket&& o) noexcept {
    if (this != &o) {
      close();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  ~Socket() { close(); }

  [[nodiscard]] int fd() const { return fd_; }
  [[nodiscard]] bool valid() const { return fd_ >= 0; }
  void close() {
    if (fd_ >= 0) ::close(std::exchange(fd_, -1));
  }

  // True when readable within the timeout.
  [[nodiscard]] bool wait_readable(std::chrono::milliseconds timeout) const {
    pollfd p{fd_, POLLIN, 0};
    const int rc = ::poll(&p, 1, static_cast<int>(timeout.count()));
    return rc > 0;
  }

 private:
  int fd_ = -1;
};

inline std::string errno_text() { return std::strerror(errno); }

class UdpSocket {
 public:
  // Binds with SO_REUSEADDR so several local devices can share a discovery port.
  static UdpSocket bind(const Endpoint& local, bool broadcast = false) {
    UdpSocket s;
    s.sock_ = Socket(::socket(AF_INET, SOCK_DGRAM | SOCK_CLOEXEC, 0));
    if (!s.sock_.valid()) throw Error(ErrorCode::ConnectionError, "socket: " + errno_text());
    int one = 1;
    ::setsockopt(s.sock_.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (broadcast) ::setsockopt(s.sock_.fd(), SOL_SOCKET, SO_BROADCAST, &one, sizeof one);
    const sockaddr_in a = to_sockaddr(local);
    if (::bind(s.sock_.fd(), reinterpret_cast<const sockaddr*>(&a), sizeof a) != 0) {
      throw Error(errno == EADDRINUSE ? ErrorCode::PortInUse : ErrorCode::ConnectionError,
                  "bind " + local.str() + ": " + errno_text());
    }
    return s;
  }

  void send_to(const Endpoint& to, std::span<const std::uint8_t> bytes) const {
    const sockaddr_in a = to_sockaddr(to);
    if (::sendto(sock_.fd(), bytes.data(), bytes.size(), 0, reinterpret_cast<const sockaddr*>(&a), sizeof a) < 0) {
      throw Error(ErrorCode::ConnectionError, "sendto " + to.str() + ": " + errno_text());
    }
  }

  struct Datagram {
    std::vector<std::uint8_t> bytes;
    Endpoint from;
  };

  std::optional<Datagram> receive(std::chrono::milliseconds timeout) const {
    if (!sock_.wait_readable(timeout)) return std::nullopt;
    Datagram d;
    d.bytes.resize(512);
    sockaddr_in from{};
    socklen_t len = sizeof from;
    const auto n = ::recvfrom(sock_.fd(), d.bytes.data(), d.bytes.size(), 0, reinterpret_cast<sockaddr*>(&from), &len);
    if (n < 0) return std::nullopt;
    d.bytes.resize(static_cast<std::size_t>(n));
    d.from = from_sockaddr(from);
    return d;
  }

  [[nodiscard]] Endpoint local_endpoint() const {
    sockaddr_in a{};
    socklen_t len = sizeof a;
    ::getsockname(sock_.fd(), reinterpret_cast<sockaddr*>(&a), &len);
    return from_sockaddr(a);
  }

 private:
  Socket sock_;
};

class TcpStream {
 public:
  TcpStream() = default;
  explicit TcpStream(Socket s) : sock_(std::move(s)) { set_nodelay(); }

  static TcpStream connect(const Endpoint& remote, std::chrono::milliseconds timeout) {
    Socket s(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC | SOCK_NONBLOCK, 0));
    if (!s.valid()) throw Error(ErrorCode::ConnectionError, "socket: " + errno_text());
    const sockaddr_in a = to_sockaddr(remote);
    if (::connect(s.fd(), reinterpret_cast<const sockaddr*>(&a), sizeof a) != 0) {
      if (errno != EINPROGRESS) throw Error(ErrorCode::ConnectionError, "connect " + remote.str() + ": " + errno_text());
      pollfd p{s.fd(), POLLOUT, 0};
      if (::poll(&p, 1, static_cast<int>(timeout.count())) <= 0) {
        throw Error(ErrorCode::ConnectionError, "connect " + remote.str() + ": timed out");
      }
      int err = 0;
      socklen_t len = sizeof err;
      ::getsockopt(s.fd(), SOL_SOCKET, SO_ERROR, &err, &len);
      if (err != 0) throw Error(ErrorCode::ConnectionError, "connect " + remote.str() + ": " + std::strerror(err));
    }
    const int flags = ::fcntl(s.fd(), F_GETFL);
    ::fcntl(s.fd(), F_SETFL, flags & ~O_NONBLOCK);
    return TcpStream(std::move(s));
  }

  [[nodiscard]] bool valid() const { return sock_.valid(); }

  void write_all(std::span<const std::uint8_t> bytes) const {
    std::size_t sent = 0;
    while (sent < bytes.size()) {
      const auto n = ::send(sock_.fd(), bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw Error(ErrorCode::ConnectionError, "send: " + errno_text());
      }
      sent += static_cast<std::size_t>(n);
    }
  }

  // Empty optional on timeout; empty vector on orderly close.
  std::optional<std::vector<std::uint8_t>> read_some(std::chrono::milliseconds timeout) const {
    if (!sock_.wait_readable(timeout)) return std::nullopt;
    std::vector<std::uint8_t> buf(4096);
    const auto n = ::recv(sock_.fd(), buf.data(), buf.size(), 0);
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN) return std::nullopt;
      throw Error(ErrorCode::ConnectionError, "recv: " + errno_text());
    }
    buf.resize(static_cast<std::size_t>(n));
    return buf;
  }

  void shutdown() const {
    if (sock_.valid()) ::shutdown(sock_.fd(), SHUT_RDWR);
  }
  void close() { sock_.close(); }

 private:
  void set_nodelay() {
    int one = 1;
    ::setsockopt(sock_.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  }

  Socket sock_;
};

class TcpListener {
 public:
  static TcpListener bind(const Endpoint& local) {
    TcpListener l;
    l.sock_ = Socket(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
    if (!l.sock_.valid()) throw Error(ErrorCode::ConnectionError, "socket: " + errno_text());
    int one = 1;
    ::setsockopt(l.sock_.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    const sockaddr_in a = to_sockaddr(local);
    if (::bind(l.sock_.fd(), reinterpret_cast<const sockaddr*>(&a), sizeof a) != 0) {
      throw Error(errno == EADDRINUSE ? ErrorCode::PortInUse : ErrorCode::ConnectionError,
                  "bind " + local.str() + ": " + errno_text());
    }
    if (::listen(l.sock_.fd(), 4) != 0) throw Error(ErrorCode::ConnectionError, "listen: " + errno_text());
    return l;
  }

  std::optional<TcpStream> accept(std::chrono::milliseconds timeout) const {
    if (!sock_.wait_readable(timeout)) return std::nullopt;
    const int fd = ::accept4(sock_.fd(), nullptr, nullptr, SOCK_CLOEXEC);
    if (fd < 0) return std::nullopt;
    return TcpStream(Socket(fd));
  }

  [[nodiscard]] std::uint16_t port() const {
    sockaddr_in a{};
    socklen_t len = sizeof a;
    ::getsockname(sock_.fd(), reinterpret_cast<sockaddr*>(&a), &len);
    return ntohs(a.sin_port);
  }

 private:
  Socket sock_;
};

}  // namespace hapticmesh::net
