#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <mutex>
#include <string>

#include "pfesta/transport/message.hpp"

namespace pfesta::transport {

enum class Direction : std::uint8_t { Up, Down };  // client to server, server to client

std::string_view to_string(Direction d);

struct Counter {
  std::uint64_t elements = 0;
  std::uint64_t bytes = 0;
  bool operator==(const Counter&) const = default;
};

struct LedgerKey {
  std::uint32_t client_id;
  Direction direction;
  Category category;
  auto operator<=>(const LedgerKey&) const = default;
};

// Payload element counters per (client link, direction, category), plus a
// count of frames per message kind. Headers are not metered.
class TrafficLedger {
 public:
  TrafficLedger() = default;
  TrafficLedger(const TrafficLedger& other);
  TrafficLedger& operator=(const TrafficLedger& other);

  void record(std::uint32_t client_id, Direction direction, const Message& m);

  std::map<LedgerKey, Counter> counters() const;
  std::array<std::uint64_t, kMessageKinds> frames() const;
  std::uint64_t frames(MessageKind kind) const;

  std::uint64_t elements(Category category) const;
  std::uint64_t elements(std::uint32_t client_id, Category category) const;
  std::uint64_t elements_for_client(std::uint32_t client_id) const;
  std::uint64_t total_elements() const;
  std::uint64_t total_bytes() const;

  // Columns: link,direction,category,elements,bytes
  std::string to_csv() const;
  // Counters only; frame counts are not part of the CSV. Throws bytes::DecodeError.
  static TrafficLedger from_csv(const std::string& text);

  bool operator==(const TrafficLedger& other) const;

 private:
  mutable std::mutex mutex_;
  std::map<LedgerKey, Counter> counters_;
  std::array<std::uint64_t, kMessageKinds> frames_{};
};

}  // namespace pfesta::transport
