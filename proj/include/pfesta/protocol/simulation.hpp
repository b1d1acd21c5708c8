#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "pfesta/costs/costs.hpp"
#include "pfesta/model/optim.hpp"
#include "pfesta/model/tail.hpp"
#include "pfesta/protocol/config.hpp"
#include "pfesta/protocol/steps.hpp"
#include "pfesta/transport/link.hpp"

namespace pfesta::protocol {

struct MetricRecord {
  std::size_t round = 0;
  std::uint32_t client = 0;
  std::string task;
  std::string metric;
  double value = 0;
};

struct ClientInfo {
  std::uint32_t id = 0;
  std::size_t task = 0;
  std::string task_name;
  tasks::TaskKind kind = tasks::TaskKind::Classification;
  std::size_t samples = 0;
};

// "auc" for classification, "mse" of the summed severity score, "dice" for masks.
std::string primary_metric(tasks::TaskKind kind);

struct RunReport {
  RunConfig config;
  std::size_t rounds_trained = 0;
  std::vector<ClientInfo> clients;
  std::vector<MetricRecord> metrics;
  transport::TrafficLedger ledger;

  // Mean over the task's clients of the primary metric at the last evaluation.
  double final_metric(const std::string& task_name) const;
  // Per round training loss of one client, rounds 1..rounds_trained.
  std::vector<double> loss_curve(std::uint32_t client) const;

  std::string metrics_csv() const;  // round,client,task,metric,value
  std::string summary() const;      // key = value lines
};

// Per-client tensors the server combined in the most recent body update.
struct BodyUpdateTrace {
  std::vector<std::pair<std::size_t, model::ParamSet>> per_client;  // (task, gradient)
  model::ParamSet applied;
};

using CacheKey = std::pair<std::uint32_t, std::uint64_t>;  // (client, sample)

// Server and clients of one run, advanced round by round. Clients are served in
// id order within a round; all traffic goes through the network's links.
class Simulation {
 public:
  Simulation(RunConfig config, const tasks::SyntheticWorld& world);
  ~Simulation();
  Simulation(const Simulation&) = delete;
  Simulation& operator=(const Simulation&) = delete;

  void run_round();
  void evaluate();
  RunReport finish();

  std::size_t round() const { return round_; }
  std::size_t client_count() const;
  const RunConfig& config() const { return config_; }
  const model::HeadParams& head() const { return head_; }
  const model::BodyParams& body() const;
  const std::map<CacheKey, Tensor>& feature_cache() const { return cache_; }
  const model::TailParams& tail(std::uint32_t client) const;
  // The head a client embeds with (the shared one when frozen) and the body
  // it trains against (its own replica under federated averaging).
  const model::HeadParams& client_head(std::uint32_t client) const;
  const model::BodyParams& client_body(std::uint32_t client) const;
  const BodyUpdateTrace& last_body_update() const { return trace_; }
  const transport::TrafficLedger& ledger() const;

 private:
  struct Client;

  void upload_features();
  void cached_round();
  void split_round();
  void local_round();
  model::ParamSet split_exchange(Client& c);
  void unify();
  void record_loss(const Client& c, double loss);
  double evaluate_client(const Client& c) const;
  Tensor client_tokens(const Client& c, const Tensor& image) const;

  RunConfig config_;
  const tasks::SyntheticWorld* world_;
  model::HeadConfig head_config_;
  model::HeadParams head_;
  model::BodyParams body_;
  model::Optimizer body_opt_;
  std::vector<std::unique_ptr<Client>> clients_;
  std::vector<std::size_t> clients_per_task_;
  std::map<CacheKey, Tensor> cache_;
  std::vector<std::vector<std::uint64_t>> cached_ids_;
  std::vector<BatchSampler> server_samplers_;
  std::unique_ptr<transport::Network> network_;
  BodyUpdateTrace trace_;
  std::size_t round_ = 0;
  std::size_t last_eval_ = static_cast<std::size_t>(-1);
  std::vector<MetricRecord> metrics_;
};

RunReport run(const RunConfig& config, const tasks::SyntheticWorld& world);

// Closed-form inputs for one client link of a run.
costs::CostParams cost_params_for(const RunConfig& config, const tasks::SyntheticWorld& world, std::uint32_t client);

}  // namespace pfesta::protocol
