#include "pfesta/transport/message.hpp"

#include <string>

#include "pfesta/engine/byte_io.hpp"

namespace pfesta::transport {

std::string_view to_string(MessageKind kind) {
  switch (kind) {
    case MessageKind::FeatureUpload: return "FeatureUpload";
    case MessageKind::BodyOutput: return "BodyOutput";
    case MessageKind::TailGradient: return "TailGradient";
    case MessageKind::TailWeightsUpload: return "TailWeightsUpload";
    case MessageKind::TailWeightsBroadcast: return "TailWeightsBroadcast";
    case MessageKind::FullModelUpload: return "FullModelUpload";
    case MessageKind::FullModelBroadcast: return "FullModelBroadcast";
    case MessageKind::Control: return "Control";
    case MessageKind::HeadGradient: return "HeadGradient";
    case MessageKind::HeadWeightsUpload: return "HeadWeightsUpload";
    case MessageKind::HeadWeightsBroadcast: return "HeadWeightsBroadcast";
  }
  return "unknown";
}

std::string_view to_string(Category category) {
  switch (category) {
    case Category::Features: return "features";
    case Category::Gradients: return "gradients";
    case Category::Parameters: return "parameters";
  }
  return "unknown";
}

std::optional<MessageKind> kind_from_code(std::uint8_t code) {
  if (code >= kMessageKinds) return std::nullopt;
  return static_cast<MessageKind>(code);
}

std::optional<Category> category_of(MessageKind kind) {
  switch (kind) {
    case MessageKind::FeatureUpload:
    case MessageKind::BodyOutput: return Category::Features;
    case MessageKind::TailGradient:
    case MessageKind::HeadGradient: return Category::Gradients;
    case MessageKind::TailWeightsUpload:
    case MessageKind::TailWeightsBroadcast:
    case MessageKind::FullModelUpload:
    case MessageKind::FullModelBroadcast:
    case MessageKind::HeadWeightsUpload:
    case MessageKind::HeadWeightsBroadcast: return Category::Parameters;
    case MessageKind::Control: return std::nullopt;
  }
  return std::nullopt;
}

bool is_per_sample(MessageKind kind) {
  switch (kind) {
    case MessageKind::FeatureUpload:
    case MessageKind::BodyOutput:
    case MessageKind::TailGradient:
    case MessageKind::HeadGradient: return true;
    default: return false;
  }
}

std::size_t Message::payload_elements() const {
  std::size_t n = 0;
  for (const auto& t : payload) n += t.size();
  return n;
}

void validate(const Message& m) {
  const auto name = std::string(to_string(m.kind));
  if (m.kind == MessageKind::Control) {
    if (!m.payload.empty() || !m.sample_ids.empty()) throw SchemaError("Control message must not carry a payload");
    return;
  }
  if (is_per_sample(m.kind)) {
    if (m.payload.size() != m.sample_ids.size()) {
      throw SchemaError(name + " carries " + std::to_string(m.payload.size()) + " tensors for " +
                        std::to_string(m.sample_ids.size()) + " samples");
    }
  } else if (!m.sample_ids.empty()) {
    throw SchemaError(name + " must not list sample ids");
  }
  for (const auto& t : m.payload) {
    if (t.rank() == 0 || t.rank() > 255) throw SchemaError(name + " tensor rank must be in [1, 255]");
  }
}

std::size_t encoded_size(const Message& m) {
  std::size_t n = kHeaderBytes + 4 + 8 * m.sample_ids.size() + 1;
  for (const auto& t : m.payload) n += 1 + 4 * t.rank() + 4 * t.size();
  return n;
}

std::vector<std::uint8_t> encode(const Message& m) {
  validate(m);
  const std::uint64_t total = encoded_size(m);
  if (total > kMaxFrameBytes) throw EncodeError("frame of " + std::to_string(total) + " bytes exceeds 2^31");
  if (m.payload.size() > 255) throw EncodeError("more than 255 tensors in one frame");
  std::vector<std::uint8_t> out;
  out.reserve(total);
  bytes::put_le<std::uint32_t>(out, kMagic);
  out.push_back(kVersion);
  out.push_back(static_cast<std::uint8_t>(m.kind));
  bytes::put_le<std::uint64_t>(out, m.round);
  bytes::put_le<std::uint32_t>(out, m.client_id);
  bytes::put_le<std::uint16_t>(out, m.task_id);
  bytes::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.sample_ids.size()));
  for (auto id : m.sample_ids) bytes::put_le<std::uint64_t>(out, id);
  out.push_back(static_cast<std::uint8_t>(m.payload.size()));
  for (const auto& t : m.payload) {
    out.push_back(static_cast<std::uint8_t>(t.rank()));
    for (auto d : t.shape()) {
      if (d > 0xffffffffu) throw EncodeError("tensor dimension exceeds u32");
      bytes::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    }
    for (float v : t.data()) bytes::put_f32(out, v);
  }
  return out;
}

Message decode(std::span<const std::uint8_t> frame) {
  bytes::Reader in(frame);
  if (in.get<std::uint32_t>() != kMagic) throw bytes::DecodeError("bad magic");
  if (const auto v = in.get<std::uint8_t>(); v != kVersion) {
    throw bytes::DecodeError("unsupported version " + std::to_string(v));
  }
  Message m;
  const auto code = in.get<std::uint8_t>();
  const auto kind = kind_from_code(code);
  if (!kind) throw bytes::DecodeError("unknown message kind " + std::to_string(code));
  m.kind = *kind;
  m.round = in.get<std::uint64_t>();
  m.client_id = in.get<std::uint32_t>();
  m.task_id = in.get<std::uint16_t>();
  const auto n_samples = in.get<std::uint32_t>();
  if (n_samples > in.remaining() / 8) throw bytes::DecodeError("sample count exceeds frame");
  m.sample_ids.resize(n_samples);
  for (auto& id : m.sample_ids) id = in.get<std::uint64_t>();
  const auto n_tensors = in.get<std::uint8_t>();
  m.payload.reserve(n_tensors);
  for (std::size_t i = 0; i < n_tensors; ++i) {
    const auto rank = in.get<std::uint8_t>();
    if (rank == 0) throw bytes::DecodeError("tensor of rank 0");
    Shape shape(rank);
    std::uint64_t count = 1;
    for (auto& d : shape) {
      d = in.get<std::uint32_t>();
      if (d == 0) throw bytes::DecodeError("zero tensor dimension");
      count *= d;
      if (count > in.remaining() / 4) throw bytes::DecodeError("tensor payload exceeds frame");
    }
    std::vector<float> data(count);
    for (auto& v : data) v = in.get_f32();
    m.payload.emplace_back(std::move(shape), std::move(data));
  }
  if (in.remaining() != 0) throw bytes::DecodeError("trailing bytes after frame");
  try {
    validate(m);
  } catch (const SchemaError& e) {
    throw bytes::DecodeError(e.what());
  }
  return m;
}

}  // namespace pfesta::transport
