#include "pfesta/protocol/config.hpp"

namespace pfesta::protocol {

std::string Ablations::to_string() const {
  std::string out;
  auto add = [&](bool on, const char* name) {
    if (!on) return;
    if (!out.empty()) out += '+';
    out += name;
  };
  add(learnable_head, "learnable_head");
  add(no_permutation, "no_permutation");
  add(no_pos_embedding, "no_pos_embedding");
  return out.empty() ? "none" : out;
}

void RunConfig::validate() const {
  if (interval == 0) throw ConfigError("interval must be at least 1");
  if (batch == 0) throw ConfigError("batch must be at least 1");
  if (rounds % interval != 0)
    throw ConfigError("interval " + std::to_string(interval) + " does not divide rounds " + std::to_string(rounds));
  if (!(lr >= 0)) throw ConfigError("learning rate must be non-negative");
  for (const auto& [kind, s] : grad_scales)
    if (!(s > 0)) throw ConfigError("gradient scale for " + std::string(tasks::to_string(kind)) + " must be positive");
  if (patch == 0) throw ConfigError("patch must be positive");
  if (strategy != costs::Strategy::PFESTA && (ablations.learnable_head || ablations.no_permutation))
    throw ConfigError("learnable_head and no_permutation apply to pfesta only");
  if (strategy == costs::Strategy::FESTA && patch != 8)
    throw ConfigError("festa needs patch 8 to match the convolutional head's token grid");
  try {
    body.validate();
  } catch (const model::ConfigError& e) {
    throw ConfigError(e.what());
  }
}

float RunConfig::grad_scale(tasks::TaskKind kind) const {
  auto it = grad_scales.find(kind);
  return it == grad_scales.end() ? 1.0f : it->second;
}

float RunConfig::learning_rate(std::size_t round) const {
  if (warmup_steps == 0 || round >= warmup_steps) return lr;
  return lr * static_cast<float>(round) / static_cast<float>(warmup_steps);
}

costs::Strategy RunConfig::traffic_strategy() const {
  if (strategy == costs::Strategy::PFESTA && ablations.learnable_head) return costs::Strategy::FESTA;
  return strategy;
}

model::HeadConfig RunConfig::head_config(std::size_t image_size) const {
  model::HeadConfig h;
  h.image_h = h.image_w = image_size;
  h.patch = patch;
  h.dim = body.dim;
  try {
    h.validate();
  } catch (const model::ConfigError& e) {
    throw ConfigError(e.what());
  }
  return h;
}

model::CnnHeadConfig RunConfig::cnn_head_config(std::size_t image_size) const {
  model::CnnHeadConfig h;
  h.image_h = h.image_w = image_size;
  h.dim = body.dim;
  return h;
}

}  // namespace pfesta::protocol
