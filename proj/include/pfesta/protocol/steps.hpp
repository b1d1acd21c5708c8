#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "pfesta/model/tail.hpp"
#include "pfesta/perm/permutation.hpp"
#include "pfesta/protocol/config.hpp"
#include "pfesta/tasks/world.hpp"
#include "pfesta/transport/message.hpp"

// The per-party pieces a round is assembled from.
namespace pfesta::protocol {

// Batches without replacement within an epoch, reshuffled every epoch from a
// per-client stream. A batch larger than what is left of an epoch continues
// into the next one.
class BatchSampler {
 public:
  BatchSampler(std::uint64_t seed, std::uint32_t client_id, std::size_t n_items);

  std::vector<std::size_t> next(std::size_t batch);
  std::size_t size() const { return order_.size(); }

 private:
  void reshuffle();

  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

model::TailKind tail_kind_for(tasks::TaskKind kind);
model::TailConfig tail_config_for(tasks::TaskKind kind, const model::HeadConfig& head);

// Loss of one sample's logits: mean BCE over classes or regions, and
// BCE + Dice + focal with equal weights for masks.
template <typename T>
BasicVar<T> task_loss(BasicGraph<T>& graph, tasks::TaskKind kind, BasicVar<T> logits, const BasicTensor<T>& target);

// One FeatureUpload per local sample: the embedded patches (with the position
// embedding unless ablated), permuted under a fresh key unless ablated. Keys
// are added to `keys`.
std::vector<transport::Message> client_head_upload(std::uint32_t client_id, std::uint16_t task_id,
                                                   const std::vector<tasks::Sample>& data,
                                                   const model::HeadParams& head, const RunConfig& config,
                                                   perm::KeyStore& keys);

struct TailStep {
  std::vector<Tensor> feature_grads;  // d(scaled loss)/d(body output), server order
  model::ParamSet tail_grads;
  double loss = 0;  // unscaled batch mean
};

// Client side of one batch. `body_outputs` arrive in server order; a null key
// means the tokens were sent unpermuted. The loss is the batch mean times
// `grad_scale`.
TailStep client_tail_step(const model::TailParams& tail, tasks::TaskKind kind, const std::vector<Tensor>& body_outputs,
                          const std::vector<const perm::PermutationKey*>& keys,
                          const std::vector<const Tensor*>& labels, float grad_scale);

// Sums per-client body gradients into (1/K) sum_k (1/N_k) sum_{c in task k} g_c.
class BodyGradientAccumulator {
 public:
  explicit BodyGradientAccumulator(std::vector<std::size_t> clients_per_task);

  void add(std::size_t task, const model::ParamSet& grads);
  bool empty() const { return sum_.empty(); }
  const model::ParamSet& average() const { return sum_; }

 private:
  std::vector<std::size_t> clients_per_task_;
  std::size_t active_tasks_ = 0;
  model::ParamSet sum_;
};

// w <- w - lr * g.
void update_body(model::ParamSet& body, const model::ParamSet& averaged, float lr);

// Elementwise mean; ProtocolError when the layouts differ.
model::ParamSet unify_tails(const std::vector<const model::ParamSet*>& tails);

}  // namespace pfesta::protocol
