#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "pfesta/engine/tensor.hpp"

namespace pfesta::transport {

// Wire codes are stable; new kinds are only ever appended.
enum class MessageKind : std::uint8_t {
  FeatureUpload = 0,
  BodyOutput = 1,
  TailGradient = 2,
  TailWeightsUpload = 3,
  TailWeightsBroadcast = 4,
  FullModelUpload = 5,
  FullModelBroadcast = 6,
  Control = 7,
  HeadGradient = 8,
  HeadWeightsUpload = 9,
  HeadWeightsBroadcast = 10,
};
inline constexpr std::size_t kMessageKinds = 11;

enum class Category : std::uint8_t { Features, Gradients, Parameters };
inline constexpr std::size_t kCategories = 3;

std::string_view to_string(MessageKind kind);
std::string_view to_string(Category category);
std::optional<MessageKind> kind_from_code(std::uint8_t code);

// Control frames carry no payload and are not metered.
std::optional<Category> category_of(MessageKind kind);

// Kinds whose payload is one tensor per listed sample.
bool is_per_sample(MessageKind kind);

class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SchemaError : public TransportError {
 public:
  using TransportError::TransportError;
};

class EncodeError : public TransportError {
 public:
  using TransportError::TransportError;
};

// There is deliberately no field for permutation keys: nothing but sample ids,
// routing data and f32 tensors can be put on the wire.
struct Message {
  MessageKind kind = MessageKind::Control;
  std::uint64_t round = 0;
  std::uint32_t client_id = 0;
  std::uint16_t task_id = 0;
  std::vector<std::uint64_t> sample_ids;
  std::vector<Tensor> payload;

  std::size_t payload_elements() const;
  bool operator==(const Message&) const = default;
};

// Throws SchemaError when the message breaks a per-kind rule:
// Control carries nothing, per-sample kinds carry one tensor per sample id,
// parameter kinds carry no sample ids.
void validate(const Message& m);

inline constexpr std::uint32_t kMagic = 0x70465354;
inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::size_t kHeaderBytes = 20;
inline constexpr std::uint64_t kMaxFrameBytes = std::uint64_t{1} << 31;

// Frame layout, all little-endian:
//   u32 magic | u8 version | u8 kind | u64 round | u32 client | u16 task   (20 bytes)
//   u32 n_samples | u64 sample_id[n_samples]
//   u8 n_tensors | per tensor: u8 rank | u32 dims[rank] | f32 payload
std::vector<std::uint8_t> encode(const Message& m);
std::size_t encoded_size(const Message& m);
Message decode(std::span<const std::uint8_t> frame);

}  // namespace pfesta::transport
