#pragma once

#include <memory>

#include "pfesta/transport/link.hpp"

namespace pfesta::transport::detail {

class Listener {
 public:
  explicit Listener(const SocketAddress& address);
  ~Listener();
  Listener(const Listener&) = delete;
  Listener& operator=(const Listener&) = delete;

  const SocketAddress& bound_address() const { return bound_; }
  std::unique_ptr<Endpoint> accept();

 private:
  int fd_ = -1;
  SocketAddress bound_;
};

// Up to kConnectAttempts tries with doubling backoff.
inline constexpr int kConnectAttempts = 6;
std::unique_ptr<Endpoint> connect_with_retry(const SocketAddress& address);

}  // namespace pfesta::transport::detail
