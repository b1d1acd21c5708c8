#include "pfesta/transport/ledger.hpp"

#include <cstdio>
#include <sstream>
#include <vector>

#include "pfesta/engine/byte_io.hpp"

namespace pfesta::transport {

std::string_view to_string(Direction d) { return d == Direction::Up ? "up" : "down"; }

TrafficLedger::TrafficLedger(const TrafficLedger& other) {
  std::lock_guard lock(other.mutex_);
  counters_ = other.counters_;
  frames_ = other.frames_;
}

TrafficLedger& TrafficLedger::operator=(const TrafficLedger& other) {
  if (this == &other) return *this;
  std::scoped_lock lock(mutex_, other.mutex_);
  counters_ = other.counters_;
  frames_ = other.frames_;
  return *this;
}

void TrafficLedger::record(std::uint32_t client_id, Direction direction, const Message& m) {
  const auto category = category_of(m.kind);
  const std::uint64_t n = m.payload_elements();
  std::lock_guard lock(mutex_);
  ++frames_[static_cast<std::size_t>(m.kind)];
  if (!category) return;
  auto& c = counters_[{client_id, direction, *category}];
  c.elements += n;
  c.bytes += 4 * n;
}

std::map<LedgerKey, Counter> TrafficLedger::counters() const {
  std::lock_guard lock(mutex_);
  return counters_;
}

std::array<std::uint64_t, kMessageKinds> TrafficLedger::frames() const {
  std::lock_guard lock(mutex_);
  return frames_;
}

std::uint64_t TrafficLedger::frames(MessageKind kind) const {
  std::lock_guard lock(mutex_);
  return frames_[static_cast<std::size_t>(kind)];
}

std::uint64_t TrafficLedger::elements(Category category) const {
  std::lock_guard lock(mutex_);
  std::uint64_t n = 0;
  for (const auto& [k, c] : counters_)
    if (k.category == category) n += c.elements;
  return n;
}

std::uint64_t TrafficLedger::elements(std::uint32_t client_id, Category category) const {
  std::lock_guard lock(mutex_);
  std::uint64_t n = 0;
  for (const auto& [k, c] : counters_)
    if (k.category == category && k.client_id == client_id) n += c.elements;
  return n;
}

std::uint64_t TrafficLedger::elements_for_client(std::uint32_t client_id) const {
  std::lock_guard lock(mutex_);
  std::uint64_t n = 0;
  for (const auto& [k, c] : counters_)
    if (k.client_id == client_id) n += c.elements;
  return n;
}

std::uint64_t TrafficLedger::total_elements() const {
  std::lock_guard lock(mutex_);
  std::uint64_t n = 0;
  for (const auto& [k, c] : counters_) n += c.elements;
  return n;
}

std::uint64_t TrafficLedger::total_bytes() const {
  std::lock_guard lock(mutex_);
  std::uint64_t n = 0;
  for (const auto& [k, c] : counters_) n += c.bytes;
  return n;
}

std::string TrafficLedger::to_csv() const {
  std::lock_guard lock(mutex_);
  std::ostringstream out;
  out << "link,direction,category,elements,bytes\n";
  for (const auto& [k, c] : counters_) {
    out << "client" << k.client_id << "<->server," << to_string(k.direction) << ',' << to_string(k.category) << ','
        << c.elements << ',' << c.bytes << '\n';
  }
  return out.str();
}

TrafficLedger TrafficLedger::from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "link,direction,category,elements,bytes")
    throw bytes::DecodeError("traffic CSV: unexpected header");
  TrafficLedger out;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto bad = [&] { return bytes::DecodeError("traffic CSV line " + std::to_string(line_no) + ": " + line); };
    std::vector<std::string> cells;
    std::istringstream row(line);
    for (std::string cell; std::getline(row, cell, ',');) cells.push_back(cell);
    if (cells.size() != 5) throw bad();
    unsigned client = 0;
    char tail[16] = {};
    if (std::sscanf(cells[0].c_str(), "client%u<->%15s", &client, tail) != 2 || std::string(tail) != "server") throw bad();
    LedgerKey key{client, Direction::Up, Category::Features};
    if (cells[1] == "down") key.direction = Direction::Down;
    else if (cells[1] != "up") throw bad();
    bool known = false;
    for (std::size_t c = 0; c < kCategories; ++c)
      if (to_string(static_cast<Category>(c)) == cells[2]) {
        key.category = static_cast<Category>(c);
        known = true;
      }
    if (!known) throw bad();
    try {
      out.counters_[key] = {std::stoull(cells[3]), std::stoull(cells[4])};
    } catch (const std::exception&) {
      throw bad();
    }
  }
  return out;
}

bool TrafficLedger::operator==(const TrafficLedger& other) const {
  if (this == &other) return true;
  std::scoped_lock lock(mutex_, other.mutex_);
  return counters_ == other.counters_ && frames_ == other.frames_;
}

}  // namespace pfesta::transport
