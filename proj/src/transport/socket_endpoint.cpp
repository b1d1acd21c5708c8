#include "socket_endpoint.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <mutex>
#include <thread>

#include "pfesta/engine/byte_io.hpp"

namespace pfesta::transport::detail {

namespace {

std::string errno_text(const char* what) { return std::string(what) + ": " + std::strerror(errno); }

sockaddr_in resolve(const SocketAddress& a) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (const int rc = ::getaddrinfo(a.host.c_str(), nullptr, &hints, &res); rc != 0) {
    throw TransportError("cannot resolve '" + a.host + "': " + ::gai_strerror(rc));
  }
  sockaddr_in out = *reinterpret_cast<sockaddr_in*>(res->ai_addr);
  ::freeaddrinfo(res);
  out.sin_port = htons(a.port);
  return out;
}

bool write_all(int fd, const std::uint8_t* data, std::size_t n) {
  int retries = 0;
  while (n > 0) {
    const ssize_t w = ::send(fd, data, n, MSG_NOSIGNAL);
    if (w < 0) {
      if ((errno == EINTR || errno == EAGAIN) && ++retries < 100) continue;
      return false;
    }
    data += w;
    n -= static_cast<std::size_t>(w);
  }
  return true;
}

bool read_all(int fd, std::uint8_t* data, std::size_t n) {
  while (n > 0) {
    const ssize_t r = ::recv(fd, data, n, 0);
    if (r < 0 && errno == EINTR) continue;
    if (r <= 0) return false;
    data += r;
    n -= static_cast<std::size_t>(r);
  }
  return true;
}

// Length-prefixed frames over a connected TCP socket. A reader thread drains
// the socket into a queue so a peer can never block on a full kernel buffer
// while this side is busy sending.
class SocketEndpoint : public Endpoint {
 public:
  explicit SocketEndpoint(int fd) : fd_(fd) {
    int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    reader_ = std::thread([this] { read_loop(); });
  }

  ~SocketEndpoint() override {
    close();
    if (reader_.joinable()) reader_.join();
    ::close(fd_);
  }

  void send(const Message& m) override {
    const auto frame = encode(m);
    std::vector<std::uint8_t> prefix;
    bytes::put_le<std::uint32_t>(prefix, static_cast<std::uint32_t>(frame.size()));
    std::lock_guard lock(send_mutex_);
    if (shut_) throw TransportError("send on closed socket link");
    if (!write_all(fd_, prefix.data(), prefix.size()) || !write_all(fd_, frame.data(), frame.size())) {
      throw TransportError(errno_text("socket send failed"));
    }
  }

  Message receive() override {
    std::unique_lock lock(mutex_);
    ready_.wait(lock, [&] { return !inbox_.empty() || eof_; });
    if (inbox_.empty()) throw TransportError(error_.empty() ? "socket link closed" : error_);
    Message m = std::move(inbox_.front());
    inbox_.pop_front();
    return m;
  }

  std::optional<Message> try_receive() override {
    std::lock_guard lock(mutex_);
    if (inbox_.empty()) return std::nullopt;
    Message m = std::move(inbox_.front());
    inbox_.pop_front();
    return m;
  }

  void close() override {
    std::lock_guard lock(send_mutex_);
    if (shut_) return;
    shut_ = true;
    ::shutdown(fd_, SHUT_RDWR);
  }

 private:
  void read_loop() {
    std::string error;
    for (;;) {
      std::uint8_t len_bytes[4];
      if (!read_all(fd_, len_bytes, 4)) break;
      const std::uint32_t len = bytes::Reader(len_bytes).get<std::uint32_t>();
      std::vector<std::uint8_t> frame(len);
      if (!read_all(fd_, frame.data(), len)) {
        error = "socket closed mid-frame";
        break;
      }
      try {
        Message m = decode(frame);
        std::lock_guard lock(mutex_);
        inbox_.push_back(std::move(m));
        ready_.notify_one();
      } catch (const std::exception& e) {
        error = std::string("bad frame: ") + e.what();
        break;
      }
    }
    std::lock_guard lock(mutex_);
    eof_ = true;
    error_ = error;
    ready_.notify_all();
  }

  int fd_;
  std::thread reader_;
  std::mutex mutex_, send_mutex_;
  std::condition_variable ready_;
  std::deque<Message> inbox_;
  bool eof_ = false;
  bool shut_ = false;
  std::string error_;
};

}  // namespace

Listener::Listener(const SocketAddress& address) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw TransportError(errno_text("socket"));
  int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr = resolve(address);
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0 || ::listen(fd_, 64) < 0) {
    const auto msg = errno_text(("cannot listen on " + address.to_string()).c_str());
    ::close(fd_);
    throw TransportError(msg);
  }
  socklen_t len = sizeof addr;
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  bound_ = address;
  bound_.port = ntohs(addr.sin_port);
}

Listener::~Listener() {
  if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<Endpoint> Listener::accept() {
  for (;;) {
    const int fd = ::accept(fd_, nullptr, nullptr);
    if (fd >= 0) return std::make_unique<SocketEndpoint>(fd);
    if (errno != EINTR) throw TransportError(errno_text("accept"));
  }
}

std::unique_ptr<Endpoint> connect_with_retry(const SocketAddress& address) {
  const sockaddr_in addr = resolve(address);
  auto backoff = std::chrono::milliseconds(10);
  std::string last;
  for (int attempt = 0; attempt < kConnectAttempts; ++attempt) {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw TransportError(errno_text("socket"));
    if (::connect(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) == 0) {
      return std::make_unique<SocketEndpoint>(fd);
    }
    last = errno_text("connect");
    ::close(fd);
    std::this_thread::sleep_for(backoff);
    backoff *= 2;
  }
  throw TransportError("giving up on " + address.to_string() + " after " + std::to_string(kConnectAttempts) +
                       " attempts (" + last + ")");
}

}  // namespace pfesta::transport::detail
