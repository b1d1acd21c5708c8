#include "pfesta/protocol/steps.hpp"

#include <algorithm>
#include <numeric>

namespace pfesta::protocol {

BatchSampler::BatchSampler(std::uint64_t seed, std::uint32_t client_id, std::size_t n_items)
    : rng_(make_stream(seed, {0x62617463, client_id})), order_(n_items) {
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  reshuffle();
}

void BatchSampler::reshuffle() {
  std::shuffle(order_.begin(), order_.end(), rng_);
  pos_ = 0;
}

std::vector<std::size_t> BatchSampler::next(std::size_t batch) {
  if (order_.empty()) throw ProtocolError("cannot draw a batch from an empty partition");
  std::vector<std::size_t> out;
  out.reserve(batch);
  while (out.size() < batch) {
    if (pos_ == order_.size()) reshuffle();
    out.push_back(order_[pos_++]);
  }
  return out;
}

model::TailKind tail_kind_for(tasks::TaskKind kind) {
  switch (kind) {
    case tasks::TaskKind::Classification: return model::TailKind::LinearClassifier;
    case tasks::TaskKind::Severity: return model::TailKind::SeverityMapper;
    case tasks::TaskKind::Segmentation: return model::TailKind::SegDecoder;
  }
  throw ProtocolError("unknown task kind");
}

model::TailConfig tail_config_for(tasks::TaskKind kind, const model::HeadConfig& head) {
  model::TailConfig t;
  t.kind = tail_kind_for(kind);
  t.dim = head.dim;
  t.n_classes = tasks::kClasses;
  t.n_severity = tasks::kRegions;
  t.grid_h = head.grid_h();
  t.grid_w = head.grid_w();
  t.patch = head.patch;
  return t;
}

template <typename T>
BasicVar<T> task_loss(BasicGraph<T>&, tasks::TaskKind kind, BasicVar<T> logits, const BasicTensor<T>& target) {
  if (kind != tasks::TaskKind::Segmentation) return ops::bce_with_logits(logits, target);
  return ops::add(ops::add(ops::bce_with_logits(logits, target), ops::dice_loss(logits, target)),
                  ops::focal_loss(logits, target));
}

template BasicVar<float> task_loss<float>(BasicGraph<float>&, tasks::TaskKind, BasicVar<float>, const Tensor&);
template BasicVar<double> task_loss<double>(BasicGraph<double>&, tasks::TaskKind, BasicVar<double>,
                                            const BasicTensor<double>&);

std::vector<transport::Message> client_head_upload(std::uint32_t client_id, std::uint16_t task_id,
                                                   const std::vector<tasks::Sample>& data,
                                                   const model::HeadParams& head, const RunConfig& config,
                                                   perm::KeyStore& keys) {
  std::vector<transport::Message> out;
  out.reserve(data.size());
  const std::size_t n = head.config.n_tokens();
  for (const auto& s : data) {
    Tensor tokens = model::embed_patches(s.image, head, !config.ablations.no_pos_embedding);
    const auto& key = keys.add(config.ablations.no_permutation ? perm::PermutationKey::identity(s.id, n)
                                                               : perm::generate_key(config.seed, client_id, s.id, n));
    transport::Message m;
    m.kind = transport::MessageKind::FeatureUpload;
    m.client_id = client_id;
    m.task_id = task_id;
    m.sample_ids = {s.id};
    m.payload.push_back(perm::permute(tokens, key));
    out.push_back(std::move(m));
  }
  return out;
}

TailStep client_tail_step(const model::TailParams& tail, tasks::TaskKind kind, const std::vector<Tensor>& body_outputs,
                          const std::vector<const perm::PermutationKey*>& keys,
                          const std::vector<const Tensor*>& labels, float grad_scale) {
  const std::size_t b = body_outputs.size();
  if (keys.size() != b || labels.size() != b) throw ProtocolError("batch pieces disagree in length");
  if (tail.config.kind != tail_kind_for(kind)) throw ProtocolError("tail variant does not match the task");
  if (b == 0) throw ProtocolError("empty batch");

  Graph g;
  const auto vars = model::bind(g, tail.params, "tail.", true);
  std::vector<Var> inputs, losses;
  for (std::size_t j = 0; j < b; ++j) {
    const Tensor local = keys[j] ? perm::inverse_permute(body_outputs[j], *keys[j]) : body_outputs[j];
    inputs.push_back(g.leaf("input." + std::to_string(j), local, true));
    const auto logits = model::tail_forward(g, tail.config, vars, inputs.back());
    losses.push_back(task_loss(g, kind, logits, *labels[j]));
  }
  Var total = losses.front();
  for (std::size_t j = 1; j < b; ++j) total = ops::add(total, losses[j]);
  const Var mean_loss = ops::scale(total, 1.0f / static_cast<float>(b));
  const Var scaled = ops::scale(mean_loss, grad_scale);
  const auto grads = g.backward(scaled);

  TailStep out;
  out.loss = mean_loss.value()[0];
  out.tail_grads = model::take_prefixed(grads, "tail.");
  for (std::size_t j = 0; j < b; ++j) {
    const Tensor& local = grads.at("input." + std::to_string(j));
    out.feature_grads.push_back(keys[j] ? perm::permute(local, *keys[j]) : local);
  }
  return out;
}

BodyGradientAccumulator::BodyGradientAccumulator(std::vector<std::size_t> clients_per_task)
    : clients_per_task_(std::move(clients_per_task)) {
  for (auto n : clients_per_task_) active_tasks_ += n > 0;
}

void BodyGradientAccumulator::add(std::size_t task, const model::ParamSet& grads) {
  if (task >= clients_per_task_.size() || clients_per_task_[task] == 0)
    throw ProtocolError("gradient from a task without clients");
  const float w = 1.0f / static_cast<float>(active_tasks_ * clients_per_task_[task]);
  if (sum_.empty()) sum_ = model::zeros_like(grads);
  if (!model::same_layout(sum_, grads)) throw ProtocolError("body gradient layout changed between clients");
  model::axpy(sum_, w, grads);
}

void update_body(model::ParamSet& body, const model::ParamSet& averaged, float lr) {
  model::Optimizer(model::OptimizerKind::Sgd).step(body, averaged, lr);
}

model::ParamSet unify_tails(const std::vector<const model::ParamSet*>& tails) {
  if (tails.empty()) throw ProtocolError("no tails to unify");
  for (const auto* t : tails)
    if (!model::same_layout(*t, *tails.front())) throw ProtocolError("tails of one task differ in shape");
  return model::average(tails);
}

}  // namespace pfesta::protocol
