#include "pfesta/protocol/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "pfesta/tasks/metrics.hpp"

namespace pfesta::protocol {
namespace {

using costs::Strategy;
using transport::Message;
using transport::MessageKind;

constexpr std::uint64_t kHeadStream = 0x68656164;
constexpr std::uint64_t kBodyStream = 0x626f6479;
constexpr std::uint64_t kTailStream = 0x7461696c;
constexpr std::uint64_t kCnnStream = 0x636e6e68;

Tensor stack_rows(const std::vector<Tensor>& parts) {
  std::size_t rows = 0;
  const std::size_t cols = parts.at(0).dim(1);
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.dim(1) != cols) throw ProtocolError("token blocks differ in width");
    rows += p.dim(0);
  }
  Tensor out({rows, cols});
  std::size_t at = 0;
  for (const auto& p : parts) {
    std::copy(p.data().begin(), p.data().end(), out.data().begin() + at);
    at += p.size();
  }
  return out;
}

std::vector<Tensor> split_rows(const Tensor& t, std::size_t block) {
  std::vector<Tensor> out;
  const std::size_t cols = t.dim(1);
  for (std::size_t r = 0; r < t.dim(0); r += block) {
    Tensor part({block, cols});
    std::copy(t.data().begin() + r * cols, t.data().begin() + (r + block) * cols, part.data().begin());
    out.push_back(std::move(part));
  }
  return out;
}

Message make_message(MessageKind kind, std::size_t round, std::uint32_t client, std::size_t task) {
  Message m;
  m.kind = kind;
  m.round = round;
  m.client_id = client;
  m.task_id = static_cast<std::uint16_t>(task);
  return m;
}

void assign(model::ParamSet& params, const std::vector<Tensor>& tensors) {
  try {
    model::assign_from_tensor_list(params, tensors);
  } catch (const std::exception& e) {
    throw ProtocolError(std::string("parameter payload rejected: ") + e.what());
  }
}

model::ParamSet with_values(const model::ParamSet& layout, const std::vector<Tensor>& tensors) {
  model::ParamSet out = layout;
  assign(out, tensors);
  return out;
}

std::vector<Tensor> concat_lists(std::initializer_list<std::vector<Tensor>> lists) {
  std::vector<Tensor> out;
  for (const auto& l : lists) out.insert(out.end(), l.begin(), l.end());
  return out;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

std::string primary_metric(tasks::TaskKind kind) {
  switch (kind) {
    case tasks::TaskKind::Classification: return "auc";
    case tasks::TaskKind::Severity: return "mse";
    case tasks::TaskKind::Segmentation: return "dice";
  }
  return "?";
}

struct Simulation::Client {
  ClientInfo info;
  const std::vector<tasks::Sample>* train = nullptr;
  const std::vector<tasks::Sample>* test = nullptr;
  std::map<std::uint64_t, std::size_t> index_of;
  model::TailParams tail;
  model::Optimizer tail_opt;
  model::HeadParams vit_head;
  model::CnnHeadParams cnn_head;
  model::Optimizer head_opt;
  model::BodyParams body;  // local replica, federated averaging only
  model::Optimizer body_opt;
  perm::KeyStore keys;
  BatchSampler sampler;

  Client(std::uint64_t seed, std::uint32_t id, std::size_t n, model::OptimizerKind opt)
      : tail_opt(opt), head_opt(opt), body_opt(opt), sampler(seed, id, n) {}

  const tasks::Sample& sample(std::uint64_t id) const {
    auto it = index_of.find(id);
    if (it == index_of.end()) throw ProtocolError("client has no sample " + std::to_string(id));
    return (*train)[it->second];
  }
};

Simulation::Simulation(RunConfig config, const tasks::SyntheticWorld& world)
    : config_(std::move(config)), world_(&world), body_opt_(config_.optimizer) {
  config_.validate();
  if (world.tasks.empty()) throw ConfigError("the world has no tasks");
  if (world.tasks.size() > 0xffff) throw ConfigError("too many tasks");
  head_config_ = config_.head_config(world.config.image_size);

  Rng head_rng = make_stream(config_.seed, {kHeadStream});
  head_ = model::init_head(head_config_, head_rng);
  head_.frozen = config_.strategy == Strategy::PFESTA && !config_.ablations.learnable_head;
  Rng body_rng = make_stream(config_.seed, {kBodyStream});
  body_ = model::init_body(config_.body, body_rng);
  Rng cnn_rng = make_stream(config_.seed, {kCnnStream});
  const auto cnn = model::init_cnn_head(config_.cnn_head_config(world.config.image_size), cnn_rng);

  std::uint32_t next_id = 0;
  for (std::size_t k = 0; k < world.tasks.size(); ++k) {
    const auto& task = world.tasks[k];
    Rng tail_rng = make_stream(config_.seed, {kTailStream, k});
    const auto tail = model::init_tail(tail_config_for(task.setup.kind, head_config_), tail_rng);
    clients_per_task_.push_back(task.clients.size());
    for (const auto& part : task.clients) {
      if (part.empty()) throw ConfigError("client " + std::to_string(next_id) + " of task " + task.setup.name +
                                          " has no training samples");
      auto c = std::make_unique<Client>(config_.seed, next_id, part.size(), config_.optimizer);
      c->info = {next_id, k, task.setup.name, task.setup.kind, part.size()};
      c->train = &part;
      c->test = &task.test;
      for (std::size_t i = 0; i < part.size(); ++i)
        if (!c->index_of.emplace(part[i].id, i).second) throw ConfigError("duplicate sample id in a partition");
      c->tail = tail;
      c->vit_head = head_;
      c->cnn_head = cnn;
      if (config_.strategy == Strategy::FL) c->body = body_;
      clients_.push_back(std::move(c));
      ++next_id;
    }
  }

  network_ = transport::Network::create(config_.transport, clients_.size(),
                                        transport::resolve_socket_address(config_.socket_address));
  if (config_.strategy == Strategy::PFESTA && !config_.ablations.learnable_head) upload_features();
}

Simulation::~Simulation() {
  if (network_) network_->close();
}

std::size_t Simulation::client_count() const { return clients_.size(); }

const model::BodyParams& Simulation::body() const { return body_; }

const model::TailParams& Simulation::tail(std::uint32_t client) const { return clients_.at(client)->tail; }

const model::HeadParams& Simulation::client_head(std::uint32_t client) const {
  return head_.frozen ? head_ : clients_.at(client)->vit_head;
}

const model::BodyParams& Simulation::client_body(std::uint32_t client) const {
  return config_.strategy == Strategy::FL ? clients_.at(client)->body : body_;
}

const transport::TrafficLedger& Simulation::ledger() const { return network_->ledger(); }

void Simulation::upload_features() {
  cached_ids_.assign(clients_.size(), {});
  for (auto& c : clients_) {
    auto& link = network_->link(c->info.id);
    for (auto& m : client_head_upload(c->info.id, static_cast<std::uint16_t>(c->info.task), *c->train, head_,
                                      config_, c->keys)) {
      link.send_to_server(m);
      auto got = link.receive_at_server();
      const CacheKey key{got.client_id, got.sample_ids.at(0)};
      if (!cache_.emplace(key, std::move(got.payload.at(0))).second)
        throw ProtocolError("sample " + std::to_string(key.second) + " uploaded twice");
      cached_ids_[c->info.id].push_back(key.second);
    }
    server_samplers_.emplace_back(config_.seed, c->info.id, cached_ids_[c->info.id].size());
  }
}

void Simulation::record_loss(const Client& c, double loss) {
  metrics_.push_back({round_, c.info.id, c.info.task_name, "train_loss", loss});
}

void Simulation::run_round() {
  ++round_;
  trace_ = {};
  switch (config_.strategy) {
    case Strategy::PFESTA:
      if (config_.ablations.learnable_head) split_round();
      else cached_round();
      break;
    case Strategy::FESTA:
    case Strategy::SL: split_round(); break;
    case Strategy::FL: local_round(); break;
  }
  if (round_ % config_.interval == 0) unify();
}

void Simulation::cached_round() {
  const float lr = config_.learning_rate(round_);
  const std::size_t n = head_config_.n_tokens();
  BodyGradientAccumulator acc(clients_per_task_);
  for (auto& cp : clients_) {
    Client& c = *cp;
    auto& link = network_->link(c.info.id);

    // server: batch from the cache through the body
    std::vector<std::uint64_t> ids;
    std::vector<Tensor> blocks;
    for (auto i : server_samplers_[c.info.id].next(config_.batch)) {
      ids.push_back(cached_ids_[c.info.id][i]);
      auto it = cache_.find({c.info.id, ids.back()});
      if (it == cache_.end()) throw ProtocolError("no cached features for sample " + std::to_string(ids.back()));
      blocks.push_back(it->second);
    }
    Graph g;
    const auto vars = model::bind(g, body_.params, "body.", true);
    const auto out = model::body_forward(g, body_.config, vars, g.constant(stack_rows(blocks)), n);
    auto down = make_message(MessageKind::BodyOutput, round_, c.info.id, c.info.task);
    down.sample_ids = ids;
    down.payload = split_rows(out.value(), n);
    link.send_to_client(down);

    // client: tail step
    const auto got = link.receive_at_client();
    std::vector<const perm::PermutationKey*> keys;
    std::vector<const Tensor*> labels;
    for (auto id : got.sample_ids) {
      keys.push_back(&c.keys.at(id));
      labels.push_back(&c.sample(id).label);
    }
    auto step = client_tail_step(c.tail, c.info.kind, got.payload, keys, labels, config_.grad_scale(c.info.kind));
    c.tail_opt.step(c.tail.params, step.tail_grads, lr);
    record_loss(c, step.loss);
    auto up = make_message(MessageKind::TailGradient, round_, c.info.id, c.info.task);
    up.sample_ids = got.sample_ids;
    up.payload = std::move(step.feature_grads);
    link.send_to_server(up);

    // server: body gradient for this client
    const auto back = link.receive_at_server();
    if (back.sample_ids != ids) throw ProtocolError("gradient batch does not match the body output batch");
    auto grads = model::take_prefixed(g.backward(out, stack_rows(back.payload)), "body.");
    acc.add(c.info.task, grads);
    trace_.per_client.emplace_back(c.info.task, std::move(grads));
  }
  if (!acc.empty()) {
    trace_.applied = acc.average();
    body_opt_.step(body_.params, trace_.applied, lr);
  }
}

model::ParamSet Simulation::split_exchange(Client& c) {
  const float lr = config_.learning_rate(round_);
  const bool cnn = config_.strategy == Strategy::FESTA;
  const bool permutes = config_.strategy == Strategy::PFESTA && !config_.ablations.no_permutation;
  const std::size_t n = head_config_.n_tokens();
  auto& link = network_->link(c.info.id);

  // client: head forward on a fresh batch
  Graph hg;
  auto& head_params = cnn ? c.cnn_head.params : c.vit_head.params;
  const auto hv = model::bind(hg, head_params, "head.", true);
  std::vector<Var> tokens;
  auto up = make_message(MessageKind::FeatureUpload, round_, c.info.id, c.info.task);
  for (auto i : c.sampler.next(config_.batch)) {
    const auto& s = (*c.train)[i];
    tokens.push_back(cnn ? model::cnn_head_forward(hg, c.cnn_head.config, hv, hg.constant(s.image))
                         : model::embed_patches(hg, head_config_, hv, s.image, !config_.ablations.no_pos_embedding));
    up.sample_ids.push_back(s.id);
    if (permutes && !c.keys.contains(s.id)) c.keys.add(perm::generate_key(config_.seed, c.info.id, s.id, n));
    up.payload.push_back(permutes ? perm::permute(tokens.back().value(), c.keys.at(s.id)) : tokens.back().value());
  }
  link.send_to_server(up);

  // server: body forward
  const auto features = link.receive_at_server();
  Graph g;
  const auto vars = model::bind(g, body_.params, "body.", true);
  const auto input = g.leaf("input", stack_rows(features.payload), true);
  const auto out = model::body_forward(g, body_.config, vars, input, n);
  auto down = make_message(MessageKind::BodyOutput, round_, c.info.id, c.info.task);
  down.sample_ids = features.sample_ids;
  down.payload = split_rows(out.value(), n);
  link.send_to_client(down);

  // client: tail step
  const auto outputs = link.receive_at_client();
  std::vector<const perm::PermutationKey*> keys;
  std::vector<const Tensor*> labels;
  for (auto id : outputs.sample_ids) {
    keys.push_back(permutes ? &c.keys.at(id) : nullptr);
    labels.push_back(&c.sample(id).label);
  }
  auto step = client_tail_step(c.tail, c.info.kind, outputs.payload, keys, labels, config_.grad_scale(c.info.kind));
  c.tail_opt.step(c.tail.params, step.tail_grads, lr);
  record_loss(c, step.loss);
  auto tail_grad = make_message(MessageKind::TailGradient, round_, c.info.id, c.info.task);
  tail_grad.sample_ids = outputs.sample_ids;
  tail_grad.payload = std::move(step.feature_grads);
  link.send_to_server(tail_grad);

  // server: body and input gradients
  const auto back = link.receive_at_server();
  const auto grads = g.backward(out, stack_rows(back.payload));
  auto head_grad = make_message(MessageKind::HeadGradient, round_, c.info.id, c.info.task);
  head_grad.sample_ids = back.sample_ids;
  head_grad.payload = split_rows(grads.at("input"), n);
  link.send_to_client(head_grad);

  // client: head update
  const auto hgot = link.receive_at_client();
  std::vector<Tensor> local;
  for (std::size_t j = 0; j < hgot.payload.size(); ++j)
    local.push_back(permutes ? perm::inverse_permute(hgot.payload[j], c.keys.at(hgot.sample_ids[j])) : hgot.payload[j]);
  const auto hgrads = hg.backward(ops::concat_rows(tokens), stack_rows(local));
  c.head_opt.step(head_params, model::take_prefixed(hgrads, "head."), lr);

  return model::take_prefixed(grads, "body.");
}

void Simulation::split_round() {
  const float lr = config_.learning_rate(round_);
  if (config_.strategy == Strategy::SL) {
    // sequential: the body moves after every client
    for (auto& c : clients_) {
      auto grads = split_exchange(*c);
      body_opt_.step(body_.params, grads, lr);
      trace_.per_client.emplace_back(c->info.task, grads);
      trace_.applied = std::move(grads);
    }
    return;
  }
  BodyGradientAccumulator acc(clients_per_task_);
  for (auto& c : clients_) {
    auto grads = split_exchange(*c);
    acc.add(c->info.task, grads);
    trace_.per_client.emplace_back(c->info.task, std::move(grads));
  }
  trace_.applied = acc.average();
  body_opt_.step(body_.params, trace_.applied, lr);
}

void Simulation::local_round() {
  const float lr = config_.learning_rate(round_);
  const std::size_t n = head_config_.n_tokens();
  for (auto& cp : clients_) {
    Client& c = *cp;
    Graph g;
    const auto hv = model::bind(g, c.vit_head.params, "head.", true);
    const auto bv = model::bind(g, c.body.params, "body.", true);
    const auto tv = model::bind(g, c.tail.params, "tail.", true);
    std::vector<Var> tokens;
    std::vector<const tasks::Sample*> batch;
    for (auto i : c.sampler.next(config_.batch)) {
      batch.push_back(&(*c.train)[i]);
      tokens.push_back(model::embed_patches(g, head_config_, hv, batch.back()->image, !config_.ablations.no_pos_embedding));
    }
    const auto out = model::body_forward(g, c.body.config, bv, ops::concat_rows(tokens), n);
    Var total;
    for (std::size_t j = 0; j < batch.size(); ++j) {
      const auto logits = model::tail_forward(g, c.tail.config, tv, ops::slice_rows(out, j * n, (j + 1) * n));
      const auto l = task_loss(g, c.info.kind, logits, batch[j]->label);
      total = j == 0 ? l : ops::add(total, l);
    }
    const auto mean_loss = ops::scale(total, 1.0f / static_cast<float>(batch.size()));
    const auto grads = g.backward(ops::scale(mean_loss, config_.grad_scale(c.info.kind)));
    c.head_opt.step(c.vit_head.params, model::take_prefixed(grads, "head."), lr);
    c.body_opt.step(c.body.params, model::take_prefixed(grads, "body."), lr);
    c.tail_opt.step(c.tail.params, model::take_prefixed(grads, "tail."), lr);
    record_loss(c, mean_loss.value()[0]);
  }
}

void Simulation::unify() {
  const auto s = config_.strategy;
  if (s == Strategy::SL) return;
  const bool full = s == Strategy::FL;
  const bool heads = s == Strategy::FESTA || (s == Strategy::PFESTA && config_.ablations.learnable_head);
  const bool cnn = s == Strategy::FESTA;
  auto head_of = [&](Client& c) -> model::ParamSet& { return cnn ? c.cnn_head.params : c.vit_head.params; };

  // uploads, as the server receives them
  const std::size_t n_tasks = clients_per_task_.size();
  std::vector<std::vector<model::ParamSet>> tails(n_tasks), task_heads(n_tasks);
  std::vector<model::ParamSet> all_heads, all_bodies;
  for (auto& cp : clients_) {
    Client& c = *cp;
    auto& link = network_->link(c.info.id);
    if (full) {
      auto m = make_message(MessageKind::FullModelUpload, round_, c.info.id, c.info.task);
      m.payload = concat_lists({model::to_tensor_list(c.vit_head.params), model::to_tensor_list(c.body.params),
                                model::to_tensor_list(c.tail.params)});
      link.send_to_server(m);
      const auto got = link.receive_at_server();
      const auto nh = c.vit_head.params.size(), nb = c.body.params.size();
      std::vector<Tensor> h(got.payload.begin(), got.payload.begin() + nh);
      std::vector<Tensor> b(got.payload.begin() + nh, got.payload.begin() + nh + nb);
      std::vector<Tensor> t(got.payload.begin() + nh + nb, got.payload.end());
      all_heads.push_back(with_values(head_.params, h));
      all_bodies.push_back(with_values(body_.params, b));
      tails[c.info.task].push_back(with_values(c.tail.params, t));
      continue;
    }
    if (heads) {
      auto m = make_message(MessageKind::HeadWeightsUpload, round_, c.info.id, c.info.task);
      m.payload = model::to_tensor_list(head_of(c));
      link.send_to_server(m);
      task_heads[c.info.task].push_back(with_values(head_of(c), link.receive_at_server().payload));
    }
    auto m = make_message(MessageKind::TailWeightsUpload, round_, c.info.id, c.info.task);
    m.payload = model::to_tensor_list(c.tail.params);
    link.send_to_server(m);
    tails[c.info.task].push_back(with_values(c.tail.params, link.receive_at_server().payload));
  }

  auto mean_of = [](const std::vector<model::ParamSet>& sets) {
    std::vector<const model::ParamSet*> ptrs;
    for (const auto& p : sets) ptrs.push_back(&p);
    return unify_tails(ptrs);
  };
  std::vector<model::ParamSet> tail_mean(n_tasks), head_mean(n_tasks);
  for (std::size_t k = 0; k < n_tasks; ++k) {
    if (tails[k].empty()) continue;
    tail_mean[k] = mean_of(tails[k]);
    if (heads) head_mean[k] = mean_of(task_heads[k]);
  }
  model::ParamSet global_head, global_body;
  if (full) {
    global_head = mean_of(all_heads);
    global_body = mean_of(all_bodies);
  }

  // broadcasts
  for (auto& cp : clients_) {
    Client& c = *cp;
    auto& link = network_->link(c.info.id);
    const auto& tail = tail_mean[c.info.task];
    if (full) {
      auto m = make_message(MessageKind::FullModelBroadcast, round_, c.info.id, c.info.task);
      m.payload = concat_lists({model::to_tensor_list(global_head), model::to_tensor_list(global_body),
                                model::to_tensor_list(tail)});
      link.send_to_client(m);
      const auto got = link.receive_at_client();
      const auto nh = c.vit_head.params.size(), nb = c.body.params.size();
      assign(c.vit_head.params, {got.payload.begin(), got.payload.begin() + nh});
      assign(c.body.params, {got.payload.begin() + nh, got.payload.begin() + nh + nb});
      assign(c.tail.params, {got.payload.begin() + nh + nb, got.payload.end()});
      continue;
    }
    if (heads) {
      auto m = make_message(MessageKind::HeadWeightsBroadcast, round_, c.info.id, c.info.task);
      m.payload = model::to_tensor_list(head_mean[c.info.task]);
      link.send_to_client(m);
      assign(head_of(c), link.receive_at_client().payload);
    }
    auto m = make_message(MessageKind::TailWeightsBroadcast, round_, c.info.id, c.info.task);
    m.payload = model::to_tensor_list(tail);
    link.send_to_client(m);
    assign(c.tail.params, link.receive_at_client().payload);
  }
}

Tensor Simulation::client_tokens(const Client& c, const Tensor& image) const {
  if (config_.strategy == Strategy::FESTA) return model::cnn_head_forward(image, c.cnn_head);
  const auto& head = head_.frozen ? head_ : c.vit_head;
  return model::embed_patches(image, head, !config_.ablations.no_pos_embedding);
}

double Simulation::evaluate_client(const Client& c) const {
  const auto& test = *c.test;
  if (test.empty()) return std::nan("");
  const std::size_t n = head_config_.n_tokens();
  std::vector<Tensor> blocks;
  for (const auto& s : test) blocks.push_back(client_tokens(c, s.image));
  const auto& body = config_.strategy == Strategy::FL ? c.body : body_;
  Graph g;
  const auto vars = model::bind(g, body.params, "body.", false);
  const auto out = model::body_forward(g, body.config, vars, g.constant(stack_rows(blocks)), n).value();
  const auto feats = split_rows(out, n);

  switch (c.info.kind) {
    case tasks::TaskKind::Classification: {
      std::vector<std::vector<double>> scores;
      std::vector<std::size_t> classes;
      for (std::size_t i = 0; i < test.size(); ++i) {
        const auto logits = model::tail_forward(feats[i], c.tail);
        scores.emplace_back(logits.data().begin(), logits.data().end());
        classes.push_back(test[i].latent.class_id);
      }
      try {
        return tasks::mean_one_vs_rest_auc(scores, classes, tasks::kClasses);
      } catch (const tasks::MetricError&) {
        return std::nan("");  // a class is missing from the test split
      }
    }
    case tasks::TaskKind::Severity: {
      Tensor pred({test.size()}), truth({test.size()});
      for (std::size_t i = 0; i < test.size(); ++i) {
        const auto logits = model::tail_forward(feats[i], c.tail);
        double p = 0, t = 0;
        for (std::size_t r = 0; r < logits.size(); ++r) {
          p += sigmoid(logits[r]);
          t += test[i].label[r];
        }
        pred[i] = static_cast<float>(p);
        truth[i] = static_cast<float>(t);
      }
      return tasks::mse(pred, truth);
    }
    case tasks::TaskKind::Segmentation: {
      double total = 0;
      for (std::size_t i = 0; i < test.size(); ++i) {
        auto probs = model::tail_forward(feats[i], c.tail);
        for (auto& v : probs.data()) v = static_cast<float>(sigmoid(v));
        total += tasks::dice(probs, test[i].label);
      }
      return total / test.size();
    }
  }
  return std::nan("");
}

void Simulation::evaluate() {
  if (last_eval_ == round_) return;
  for (const auto& c : clients_)
    metrics_.push_back({round_, c->info.id, c->info.task_name, primary_metric(c->info.kind), evaluate_client(*c)});
  last_eval_ = round_;
}

RunReport Simulation::finish() {
  evaluate();
  RunReport r;
  r.config = config_;
  r.rounds_trained = round_;
  for (const auto& c : clients_) r.clients.push_back(c->info);
  r.metrics = metrics_;
  r.ledger = network_->ledger();
  return r;
}

RunReport run(const RunConfig& config, const tasks::SyntheticWorld& world) {
  Simulation sim(config, world);
  sim.evaluate();
  for (std::size_t r = 1; r <= config.rounds; ++r) {
    sim.run_round();
    if (config.eval_every && r % config.eval_every == 0) sim.evaluate();
  }
  return sim.finish();
}

costs::CostParams cost_params_for(const RunConfig& config, const tasks::SyntheticWorld& world, std::uint32_t client) {
  config.validate();
  const auto head_cfg = config.head_config(world.config.image_size);
  std::uint32_t id = 0;
  for (const auto& task : world.tasks)
    for (const auto& part : task.clients) {
      if (id++ != client) continue;
      Rng rng = make_stream(0, {});
      costs::CostParams p;
      p.samples = static_cast<double>(part.size());
      p.batch = static_cast<double>(config.batch);
      p.rounds = static_cast<double>(config.rounds);
      p.interval = static_cast<double>(config.interval);
      p.feature_elements = p.gradient_elements = static_cast<double>(head_cfg.n_tokens() * head_cfg.dim);
      p.head_params = static_cast<double>(
          config.strategy == Strategy::FESTA
              ? model::element_count(model::init_cnn_head(config.cnn_head_config(world.config.image_size), rng).params)
              : model::element_count(model::init_head(head_cfg, rng).params));
      p.body_params = static_cast<double>(model::element_count(model::init_body(config.body, rng).params));
      p.tail_params = static_cast<double>(
          model::element_count(model::init_tail(tail_config_for(task.setup.kind, head_cfg), rng).params));
      return p;
    }
  throw ConfigError("no client " + std::to_string(client) + " in this world");
}

double RunReport::final_metric(const std::string& task_name) const {
  std::size_t last = 0;
  bool found = false;
  std::string metric;
  for (const auto& c : clients)
    if (c.task_name == task_name) metric = primary_metric(c.kind);
  for (const auto& m : metrics)
    if (m.task == task_name && m.metric == metric) {
      last = std::max(last, m.round);
      found = true;
    }
  if (!found) throw ProtocolError("no evaluation recorded for task " + task_name);
  double sum = 0;
  std::size_t count = 0;
  for (const auto& m : metrics)
    if (m.task == task_name && m.metric == metric && m.round == last) {
      sum += m.value;
      ++count;
    }
  return sum / count;
}

std::vector<double> RunReport::loss_curve(std::uint32_t client) const {
  std::vector<double> out;
  for (const auto& m : metrics)
    if (m.client == client && m.metric == "train_loss") out.push_back(m.value);
  return out;
}

std::string RunReport::metrics_csv() const {
  std::string out = "round,client,task,metric,value\n";
  char buf[64];
  for (const auto& m : metrics) {
    std::snprintf(buf, sizeof buf, "%.9g", m.value);
    out += std::to_string(m.round) + ',' + std::to_string(m.client) + ',' + m.task + ',' + m.metric + ',' + buf + '\n';
  }
  return out;
}

std::string RunReport::summary() const {
  std::string out;
  auto line = [&](const std::string& k, const std::string& v) { out += k + " = " + v + '\n'; };
  char buf[64];
  line("strategy", std::string(costs::to_string(config.strategy)));
  line("ablations", config.ablations.to_string());
  line("rounds", std::to_string(rounds_trained));
  line("interval", std::to_string(config.interval));
  line("batch", std::to_string(config.batch));
  line("seed", std::to_string(config.seed));
  line("transport", std::string(transport::to_string(config.transport)));
  line("clients", std::to_string(clients.size()));
  std::vector<std::string> seen;
  for (const auto& c : clients) {
    if (std::find(seen.begin(), seen.end(), c.task_name) != seen.end()) continue;
    seen.push_back(c.task_name);
    std::snprintf(buf, sizeof buf, "%.6f", final_metric(c.task_name));
    line("final." + c.task_name + "." + primary_metric(c.kind), buf);
  }
  line("traffic.features", std::to_string(ledger.elements(transport::Category::Features)));
  line("traffic.gradients", std::to_string(ledger.elements(transport::Category::Gradients)));
  line("traffic.parameters", std::to_string(ledger.elements(transport::Category::Parameters)));
  line("traffic.elements", std::to_string(ledger.total_elements()));
  line("traffic.bytes", std::to_string(ledger.total_bytes()));
  return out;
}

}  // namespace pfesta::protocol
