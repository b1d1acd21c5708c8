#include "pfesta/transport/link.hpp"

#include <condition_variable>
#include <cstdlib>
#include <deque>
#include <mutex>

#include "socket_endpoint.hpp"

namespace pfesta::transport {

std::string_view to_string(TransportKind kind) { return kind == TransportKind::Socket ? "socket" : "inprocess"; }

std::optional<TransportKind> transport_from_string(std::string_view s) {
  if (s == "inprocess") return TransportKind::InProcess;
  if (s == "socket") return TransportKind::Socket;
  return std::nullopt;
}

namespace {

struct Queue {
  std::mutex mutex;
  std::condition_variable ready;
  std::deque<Message> items;
  bool closed = false;
};

class QueueEndpoint : public Endpoint {
 public:
  QueueEndpoint(std::shared_ptr<Queue> inbox, std::shared_ptr<Queue> outbox)
      : inbox_(std::move(inbox)), outbox_(std::move(outbox)) {}
  ~QueueEndpoint() override { close(); }

  void send(const Message& m) override {
    std::lock_guard lock(outbox_->mutex);
    if (outbox_->closed) throw TransportError("send on closed link");
    outbox_->items.push_back(m);
    outbox_->ready.notify_one();
  }

  Message receive() override {
    std::unique_lock lock(inbox_->mutex);
    inbox_->ready.wait(lock, [&] { return !inbox_->items.empty() || inbox_->closed; });
    if (inbox_->items.empty()) throw TransportError("receive on closed link");
    Message m = std::move(inbox_->items.front());
    inbox_->items.pop_front();
    return m;
  }

  std::optional<Message> try_receive() override {
    std::lock_guard lock(inbox_->mutex);
    if (inbox_->items.empty()) return std::nullopt;
    Message m = std::move(inbox_->items.front());
    inbox_->items.pop_front();
    return m;
  }

  void close() override {
    for (auto* q : {inbox_.get(), outbox_.get()}) {
      std::lock_guard lock(q->mutex);
      q->closed = true;
      q->ready.notify_all();
    }
  }

 private:
  std::shared_ptr<Queue> inbox_, outbox_;
};

}  // namespace

EndpointPair make_in_process_pair() {
  auto up = std::make_shared<Queue>();
  auto down = std::make_shared<Queue>();
  return {std::make_unique<QueueEndpoint>(down, up), std::make_unique<QueueEndpoint>(up, down)};
}

SocketAddress SocketAddress::parse(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos || colon == 0) throw TransportError("socket address must be host:port, got '" + text + "'");
  SocketAddress a;
  a.host = text.substr(0, colon);
  const std::string port = text.substr(colon + 1);
  char* end = nullptr;
  const long p = std::strtol(port.c_str(), &end, 10);
  if (port.empty() || *end != '\0' || p < 0 || p > 65535) throw TransportError("bad port in '" + text + "'");
  a.port = static_cast<std::uint16_t>(p);
  return a;
}

std::string SocketAddress::to_string() const { return host + ":" + std::to_string(port); }

SocketAddress resolve_socket_address(const SocketAddress& fallback) {
  if (const char* env = std::getenv(kSocketAddressEnv); env && *env) return SocketAddress::parse(env);
  return fallback;
}

std::unique_ptr<Endpoint> connect_endpoint(const SocketAddress& address) {
  return detail::connect_with_retry(address);
}

Link::Link(std::uint32_t client_id, EndpointPair endpoints, TrafficLedger& ledger)
    : client_id_(client_id), ends_(std::move(endpoints)), ledger_(&ledger) {}

void Link::check(const Message& m) const {
  if (closed_) throw TransportError("link to client " + std::to_string(client_id_) + " is closed");
  if (m.client_id != client_id_) {
    throw SchemaError("message for client " + std::to_string(m.client_id) + " sent on link " +
                      std::to_string(client_id_));
  }
  validate(m);
}

void Link::send_to_server(const Message& m) {
  check(m);
  ledger_->record(client_id_, Direction::Up, m);
  ends_.client->send(m);
}

void Link::send_to_client(const Message& m) {
  check(m);
  ledger_->record(client_id_, Direction::Down, m);
  ends_.server->send(m);
}

Message Link::receive_at_server() { return ends_.server->receive(); }
Message Link::receive_at_client() { return ends_.client->receive(); }
std::optional<Message> Link::try_receive_at_server() { return ends_.server->try_receive(); }
std::optional<Message> Link::try_receive_at_client() { return ends_.client->try_receive(); }

void Link::close() {
  if (closed_) return;
  closed_ = true;
  ends_.client->close();
  ends_.server->close();
}

std::unique_ptr<Network> Network::in_process(std::size_t n_clients) {
  std::unique_ptr<Network> net(new Network(TransportKind::InProcess));
  for (std::size_t c = 0; c < n_clients; ++c) {
    net->links_.push_back(
        std::make_unique<Link>(static_cast<std::uint32_t>(c), make_in_process_pair(), *net->ledger_));
  }
  return net;
}

std::unique_ptr<Network> Network::socket(std::size_t n_clients, const SocketAddress& address) {
  std::unique_ptr<Network> net(new Network(TransportKind::Socket));
  detail::Listener listener(address);
  for (std::size_t c = 0; c < n_clients; ++c) {
    auto client = detail::connect_with_retry(listener.bound_address());
    auto server = listener.accept();
    net->links_.push_back(std::make_unique<Link>(static_cast<std::uint32_t>(c),
                                                 EndpointPair{std::move(client), std::move(server)}, *net->ledger_));
  }
  return net;
}

std::unique_ptr<Network> Network::create(TransportKind kind, std::size_t n_clients, const SocketAddress& address) {
  return kind == TransportKind::Socket ? socket(n_clients, address) : in_process(n_clients);
}

Network::~Network() { close(); }

Link& Network::link(std::uint32_t client_id) {
  if (client_id >= links_.size()) throw TransportError("no link for client " + std::to_string(client_id));
  return *links_[client_id];
}

void Network::close() {
  for (auto& l : links_) l->close();
}

}  // namespace pfesta::transport
