#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>

#include "pfesta/costs/costs.hpp"
#include "pfesta/model/optim.hpp"
#include "pfesta/model/tail.hpp"
#include "pfesta/tasks/world.hpp"
#include "pfesta/transport/link.hpp"

namespace pfesta::protocol {

// Inconsistent run settings, raised before any round runs.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Broken protocol state at run time (missing cache entry, mismatched tails).
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Ablations {
  bool learnable_head = false;
  bool no_permutation = false;
  bool no_pos_embedding = false;

  std::string to_string() const;  // "none" or a '+'-joined list
};

struct RunConfig {
  costs::Strategy strategy = costs::Strategy::PFESTA;
  std::size_t rounds = 100;
  std::size_t interval = 10;  // unifying interval
  std::size_t batch = 4;      // per client per round
  float lr = 0.05f;
  std::size_t warmup_steps = 0;
  std::map<tasks::TaskKind, float> grad_scales;  // missing tasks use 1
  std::uint64_t seed = 1;
  Ablations ablations;
  model::OptimizerKind optimizer = model::OptimizerKind::Sgd;
  std::size_t eval_every = 0;  // 0: only before the first and after the last round

  std::size_t patch = 8;
  model::BodyConfig body;

  transport::TransportKind transport = transport::TransportKind::InProcess;
  transport::SocketAddress socket_address;

  // Throws ConfigError. The interval must divide the round count so that
  // every client link sees a whole number of unifications.
  void validate() const;

  float grad_scale(tasks::TaskKind kind) const;
  // Linear ramp from 0 over the warmup, then constant. Rounds count from 1.
  float learning_rate(std::size_t round) const;

  // Strategy whose traffic formula applies. A learnable head turns p-FeSTA's
  // cached upload into a per-batch exchange with head unification.
  costs::Strategy traffic_strategy() const;

  model::HeadConfig head_config(std::size_t image_size) const;
  model::CnnHeadConfig cnn_head_config(std::size_t image_size) const;
};

}  // namespace pfesta::protocol
