#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

// Little-endian scalar encoding shared by the checkpoint container and the
// wire format.
namespace pfesta::bytes {

class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename U>
void put_le(std::vector<std::uint8_t>& out, U value) {
  static_assert(std::is_unsigned_v<U>);
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

inline void put_f32(std::vector<std::uint8_t>& out, float value) { put_le(out, std::bit_cast<std::uint32_t>(value)); }

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

  template <typename U>
  U get() {
    static_assert(std::is_unsigned_v<U>);
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(data_[pos_ + i]) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }

  float get_f32() { return std::bit_cast<float>(get<std::uint32_t>()); }

  std::string get_string(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw DecodeError("truncated input at byte " + std::to_string(pos_));
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

}  // namespace pfesta::bytes
