#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pfesta/transport/ledger.hpp"
#include "pfesta/transport/message.hpp"

namespace pfesta::transport {

enum class TransportKind { InProcess, Socket };

std::string_view to_string(TransportKind kind);
std::optional<TransportKind> transport_from_string(std::string_view s);

// One side of an ordered duplex channel.
class Endpoint {
 public:
  virtual ~Endpoint() = default;
  virtual void send(const Message& m) = 0;
  // Blocks until a message arrives. Throws TransportError once the peer has
  // gone and nothing is left to read.
  virtual Message receive() = 0;
  virtual std::optional<Message> try_receive() = 0;
  virtual void close() = 0;
};

struct EndpointPair {
  std::unique_ptr<Endpoint> client;
  std::unique_ptr<Endpoint> server;
};

EndpointPair make_in_process_pair();

struct SocketAddress {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;  // 0 picks an ephemeral port

  static SocketAddress parse(const std::string& text);  // "host:port"
  std::string to_string() const;
};

inline constexpr const char* kSocketAddressEnv = "PFESTA_SOCKET_ADDR";

// The address from the environment variable when set, else `fallback`.
SocketAddress resolve_socket_address(const SocketAddress& fallback);

// Client side of a TCP link; retries a bounded number of times, then throws.
std::unique_ptr<Endpoint> connect_endpoint(const SocketAddress& address);

// Metered client<->server link. Every send is schema-checked, stamped against
// the link's client id and counted in the ledger before delivery.
class Link {
 public:
  Link(std::uint32_t client_id, EndpointPair endpoints, TrafficLedger& ledger);

  std::uint32_t client_id() const { return client_id_; }

  void send_to_server(const Message& m);
  void send_to_client(const Message& m);
  Message receive_at_server();
  Message receive_at_client();
  std::optional<Message> try_receive_at_server();
  std::optional<Message> try_receive_at_client();

  void close();

 private:
  void check(const Message& m) const;

  std::uint32_t client_id_;
  EndpointPair ends_;
  TrafficLedger* ledger_;
  bool closed_ = false;
};

// A star of links, one per client, sharing a ledger.
class Network {
 public:
  static std::unique_ptr<Network> in_process(std::size_t n_clients);
  // Opens a listener at `address` and connects every client to it over TCP.
  static std::unique_ptr<Network> socket(std::size_t n_clients, const SocketAddress& address);
  static std::unique_ptr<Network> create(TransportKind kind, std::size_t n_clients, const SocketAddress& address);

  ~Network();

  Link& link(std::uint32_t client_id);
  std::size_t size() const { return links_.size(); }
  TrafficLedger& ledger() { return *ledger_; }
  const TrafficLedger& ledger() const { return *ledger_; }
  TransportKind kind() const { return kind_; }

  void close();

 private:
  Network(TransportKind kind) : kind_(kind), ledger_(std::make_unique<TrafficLedger>()) {}

  TransportKind kind_;
  std::unique_ptr<TrafficLedger> ledger_;
  std::vector<std::unique_ptr<Link>> links_;
};

}  // namespace pfesta::transport
