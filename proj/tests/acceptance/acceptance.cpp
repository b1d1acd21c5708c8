// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "pfesta/attack/inversion.hpp"
#include "pfesta/costs/costs.hpp"
#include "pfesta/protocol/simulation.hpp"
#include "pfesta/tasks/metrics.hpp"
#include "pfesta/transport/message.hpp"
#include "support/gradcheck.hpp"

using namespace pfesta;
using costs::Strategy;
using tasks::TaskKind;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

tasks::TaskSetup task(TaskKind kind, std::string name, std::vector<std::size_t> sizes, std::size_t test) {
  tasks::TaskSetup t;
  t.kind = kind;
  t.name = std::move(name);
  t.client_sizes = std::move(sizes);
  t.test_size = test;
  return t;
}

model::BodyConfig small_body() {
  model::BodyConfig b;
  b.dim = 8;
  b.layers = 1;
  b.heads = 2;
  b.ffn_dim = 16;
  return b;
}

double max_abs_diff(const model::ParamSet& a, const model::ParamSet& b) {
  double worst = 0;
  for (const auto& [name, t] : a) worst = std::max(worst, max_abs_difference(t, b.at(name)));
  return worst;
}

// ---------------------------------------------------------------------------

Outcome ledger_matches_closed_forms() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t checks = 0;
  for (auto strategy : {Strategy::PFESTA, Strategy::FESTA, Strategy::FL, Strategy::SL}) {
    Rng rng = make_stream(2024, {static_cast<std::uint64_t>(strategy)});
    for (std::uint64_t trial = 0; trial < 20; ++trial) {
      tasks::WorldConfig w;
      w.seed = trial + 1;
      w.image_size = 16;
      const TaskKind kinds[] = {TaskKind::Classification, TaskKind::Severity, TaskKind::Segmentation};
      for (std::size_t k = 0, n = 1 + rng() % 3; k < n; ++k) {
        std::vector<std::size_t> sizes(1 + rng() % 3);
        for (auto& s : sizes) s = 1 + rng() % 8;
        w.tasks.push_back(task(kinds[(k + trial) % 3], "t" + std::to_string(k), sizes, 3));
      }
      const auto world = tasks::generate_world(w);
      protocol::RunConfig cfg;
      cfg.strategy = strategy;
      cfg.body = small_body();
      cfg.seed = trial;
      cfg.interval = 1 + rng() % 4;
      cfg.rounds = cfg.interval * (rng() % 5);
      cfg.batch = 1 + rng() % 4;
      if (strategy == Strategy::PFESTA) {
        cfg.ablations.learnable_head = rng() % 4 == 0;
        cfg.ablations.no_permutation = rng() % 4 == 0;
      }
      const auto report = protocol::run(cfg, world);
      for (std::uint32_t c = 0; c < report.clients.size(); ++c) {
        const auto check =
            costs::verify_ledger(cfg.traffic_strategy(), protocol::cost_params_for(cfg, world, c), report.ledger, c);
        ++checks;
        o.require(check.pass(), std::string(costs::to_string(strategy)) + " trial " + std::to_string(trial) +
                                    " client " + std::to_string(c));
      }
    }
  }
  const double secs = seconds_since(t0);
  o.require(secs < 60, "took " + fmt("%.1f", secs) + " s");
  if (o.pass) o.detail = std::to_string(checks) + " client links over 80 runs, exact; " + fmt("%.1f s", secs);
  return o;
}

Outcome reference_cost_table() {
  struct Cell {
    const char* task;
    Strategy strategy;
    double total;
  };
  const Cell cells[] = {
      {"classification", Strategy::FL, 10456.152}, {"classification", Strategy::SL, 9474.048},
      {"classification", Strategy::FESTA, 11390.423}, {"classification", Strategy::PFESTA, 4880.648},
      {"severity", Strategy::FL, 11090.794},       {"severity", Strategy::SL, 9474.048},
      {"severity", Strategy::FESTA, 12025.065},    {"severity", Strategy::PFESTA, 5435.649},
      {"segmentation", Strategy::FL, 11160.985},   {"segmentation", Strategy::SL, 9474.048},
      {"segmentation", Strategy::FESTA, 12095.256}, {"segmentation", Strategy::PFESTA, 5899.113},
  };
  Outcome o;
  const auto constants = costs::load_constants_file(PFESTA_DATA_DIR "/cost_constants.txt");
  const auto rows = costs::report_rows(constants);
  double worst = 0;
  for (const auto& cell : cells) {
    const auto it = std::find_if(rows.begin(), rows.end(),
                                 [&](const auto& r) { return r.task == cell.task && r.strategy == cell.strategy; });
    if (it == rows.end()) {
      o.require(false, std::string("missing ") + cell.task);
      continue;
    }
    const double rel = std::abs(it->cost.total() / 1e6 - cell.total) / cell.total;
    worst = std::max(worst, rel);
    o.require(rel <= 1e-3, std::string(cell.task) + " " + std::string(costs::to_string(cell.strategy)));
  }
  const auto text = costs::cost_table_text(constants, true);
  for (const auto& e : constants.source.entries()) {
    if (e.key == "tasks") continue;
    o.require(!e.notes.empty(), e.key + " has no derivation");
    for (const auto& note : e.notes) o.require(text.find(note) != std::string::npos, e.key + " derivation not printed");
  }
  o.require(text.find("9474.048M") != std::string::npos && text.find("4844.890M") != std::string::npos,
            "reference cells missing from the printed table");
  if (o.pass) o.detail = "12 cells, worst relative error " + fmt("%.2e", worst) + ", derivations printed";
  return o;
}

Outcome permutation_equivariance() {
  Outcome o;
  model::BodyConfig cfg;  // d = 32, L = 4
  double worst = 0;
  for (std::uint64_t trial = 0; trial < 50; ++trial) {
    Rng rng = make_stream(31, {trial});
    const auto body = model::init_body(cfg, rng);
    const std::size_t n = 2 + trial % 15;
    const auto x = uniform_tensor({n, cfg.dim}, -2, 2, rng);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const auto key = perm::PermutationKey(trial, order);
    const auto a = model::body_forward(perm::permute(x, key), body);
    const auto b = perm::permute(model::body_forward(x, body), key);
    double scale = 0;
    for (float v : b.data()) scale = std::max(scale, double(std::abs(v)));
    worst = std::max(worst, max_abs_difference(a, b) / scale);
  }
  o.require(worst < 1e-5, "body relative error " + fmt("%.2e", worst));

  tasks::WorldConfig w;
  w.tasks = {task(TaskKind::Classification, "cls", {10, 10}, 90), task(TaskKind::Severity, "sev", {60, 60}, 30),
             task(TaskKind::Segmentation, "seg", {30, 30}, 30)};
  w.tasks[0].class_weights = {{1, 1, 0}, {1, 0, 1}};
  const auto world = tasks::generate_world(w);
  protocol::RunConfig cfg_run;
  cfg_run.rounds = 100;
  cfg_run.interval = 10;
  const auto with = protocol::run(cfg_run, world);
  cfg_run.ablations.no_permutation = true;
  const auto without = protocol::run(cfg_run, world);
  double gap = 0;
  for (const char* t : {"cls", "sev", "seg"}) gap = std::max(gap, std::abs(with.final_metric(t) - without.final_metric(t)));
  o.require(gap <= 1e-3, "end-to-end metric gap " + fmt("%.2e", gap));
  if (o.pass)
    o.detail = "body worst " + fmt("%.2e", worst) + " over 50 cases; end-to-end metric gap " + fmt("%.2e", gap);
  return o;
}

Outcome gradients_match_finite_differences() {
  using testing::LossBuilder;
  using testing::ParamSetD;
  using VD = BasicVar<double>;
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0;
  std::size_t checks = 0;
  auto record = [&](const std::string& what, const testing::GradCheckResult& r) {
    ++checks;
    worst = std::max(worst, r.worst);
    o.require(r.worst < 1e-4, what + " " + r.worst_where);
  };

  using OpFn = std::function<VD(BasicGraph<double>&, const model::VarMap<double>&)>;
  auto op_check = [&](const std::string& what, const std::vector<std::pair<std::string, Shape>>& layout, OpFn op) {
    Rng rng = make_stream(77, {checks});
    auto params = testing::random_params(layout, rng);
    BasicGraph<double> probe;
    BasicTensor<double> readout(op(probe, model::bind(probe, params, "", false)).shape());
    std::uniform_real_distribution<double> dist(-1, 1);
    for (auto& v : readout.data()) v = dist(rng);
    LossBuilder build = [&](BasicGraph<double>& g, const model::VarMap<double>& p) {
      return ops::sum(ops::mul(op(g, p), g.constant(readout)));
    };
    record(what, testing::gradient_check(params, build, 100, rng));
  };

  op_check("matmul", {{"a", {3, 4}}, {"b", {4, 5}}}, [](auto&, const auto& p) { return ops::matmul(p.at("a"), p.at("b")); });
  op_check("add/sub/mul", {{"a", {3, 4}}, {"b", {4}}, {"c", {3, 4}}}, [](auto&, const auto& p) {
    return ops::mul(ops::sub(ops::add(p.at("a"), p.at("b")), p.at("c")), ops::mul(p.at("c"), p.at("b")));
  });
  op_check("softmax", {{"x", {3, 5}}}, [](auto&, const auto& p) { return ops::softmax(ops::scale(p.at("x"), 3.0), 1); });
  op_check("layer_norm", {{"x", {3, 6}}, {"g", {6}}, {"b", {6}}},
           [](auto&, const auto& p) { return ops::layer_norm(p.at("x"), p.at("g"), p.at("b"), 1e-5); });
  op_check("gelu", {{"x", {4, 4}}}, [](auto&, const auto& p) { return ops::gelu(ops::scale(p.at("x"), 2.0)); });
  op_check("sigmoid", {{"x", {4, 4}}}, [](auto&, const auto& p) { return ops::sigmoid(ops::scale(p.at("x"), 3.0)); });
  op_check("relu", {{"x", {4, 4}}}, [](auto&, const auto& p) { return ops::relu(p.at("x")); });
  op_check("reshape/transpose", {{"x", {3, 4}}},
           [](auto&, const auto& p) { return ops::transpose(ops::reshape(p.at("x"), Shape{4, 3})); });
  op_check("mean_rows", {{"x", {5, 4}}}, [](auto&, const auto& p) { return ops::mean_rows(p.at("x")); });
  op_check("slice/concat rows", {{"x", {5, 4}}, {"y", {2, 4}}}, [](auto&, const auto& p) {
    return ops::concat_rows<double>({ops::slice_rows(p.at("x"), 1, 4), p.at("y")});
  });
  op_check("slice/concat cols", {{"x", {3, 5}}, {"y", {3, 2}}}, [](auto&, const auto& p) {
    return ops::concat_cols<double>({p.at("y"), ops::slice_cols(p.at("x"), 2, 5)});
  });
  op_check("gather_rows", {{"x", {4, 3}}}, [](auto&, const auto& p) { return ops::gather_rows(p.at("x"), {2, 0, 3, 1}); });
  op_check("mean", {{"x", {3, 4}}}, [](auto&, const auto& p) { return ops::mean(ops::mul(p.at("x"), p.at("x"))); });
  op_check("conv2d", {{"x", {2, 7, 7}}, {"w", {3, 2, 3, 3}}, {"b", {3}}},
           [](auto&, const auto& p) { return ops::conv2d(p.at("x"), p.at("w"), p.at("b"), 2, 1); });
  op_check("upsample", {{"x", {2, 3, 3}}}, [](auto&, const auto& p) { return ops::upsample_nearest(p.at("x"), 2); });
  {
    Rng rng = make_stream(78, {});
    auto params = testing::random_params({{"z", {3, 4}}}, rng, -3, 3);
    BasicTensor<double> target({3, 4});
    for (std::size_t i = 0; i < target.size(); ++i) target[i] = (i * 7) % 3 == 0 ? 1.0 : 0.0;
    LossBuilder build = [&](BasicGraph<double>&, const model::VarMap<double>& p) {
      return ops::add(ops::add(ops::bce_with_logits(p.at("z"), target), ops::dice_loss(p.at("z"), target)),
                      ops::focal_loss(p.at("z"), target));
    };
    record("bce+dice+focal", testing::gradient_check(params, build, 100, rng));
  }

  // full models: frozen head, trainable body and each tail
  const model::HeadConfig head_cfg{1, 8, 8, 4, 8};
  const model::BodyConfig body_cfg{8, 2, 2, 16, 1e-5f};
  auto model_check = [&](const std::string& what, const model::TailConfig& tail_cfg, const BasicTensor<double>& target,
                         bool seg) {
    Rng rng = make_stream(79, {checks});
    const auto head = model::init_head(head_cfg, rng);
    const auto image = uniform_tensor({1, 8, 8}, -1, 1, rng);
    ParamSetD params;
    for (auto& [n, t] : model::cast_params<double>(model::init_body(body_cfg, rng).params)) params.emplace("body." + n, t);
    for (auto& [n, t] : model::cast_params<double>(model::init_tail(tail_cfg, rng).params)) params.emplace("tail." + n, t);
    std::uniform_real_distribution<double> gain(0.5, 1.5), shift(-0.2, 0.2);
    for (auto& [n, t] : params) {
      const bool is_gamma = n.find("gamma") != std::string::npos;
      if (!is_gamma && t.rank() != 1) continue;
      for (auto& v : t.data()) v = is_gamma ? gain(rng) : shift(rng);
    }
    const auto head_d = model::cast_params<double>(head.params);
    LossBuilder build = [&](BasicGraph<double>& g, const model::VarMap<double>& p) {
      model::VarMap<double> body, tail;
      for (const auto& [n, v] : p) (n.starts_with("body.") ? body : tail).emplace(n.substr(5), v);
      auto h = model::bind(g, head_d, "head.", false);
      auto tokens = model::embed_patches<double>(g, head_cfg, h, image, true);
      auto feats = model::body_forward<double>(g, body_cfg, body, tokens, head_cfg.n_tokens());
      return protocol::task_loss(g, seg ? TaskKind::Segmentation : TaskKind::Classification,
                                 model::tail_forward<double>(g, tail_cfg, tail, feats), target);
    };
    record(what, testing::gradient_check(params, build, 100, rng));
  };
  model_check("classifier model", {model::TailKind::LinearClassifier, 8, 3}, BasicTensor<double>({3}, {1, 0, 0}), false);
  model_check("severity model", {model::TailKind::SeverityMapper, 8, 3, 6},
              BasicTensor<double>({6}, {1, 0.5, 0, 0, 1, 0.25}), false);
  BasicTensor<double> mask({8, 8});
  for (std::size_t i = 0; i < 64; ++i) mask[i] = (i % 8) < 3 ? 1.0 : 0.0;
  model_check("segmentation model", {model::TailKind::SegDecoder, 8, 3, 6, 2, 2, 4, 3}, mask, true);
  {
    const model::CnnHeadConfig cfg{1, 8, 8, 3, 4, 5};
    Rng rng = make_stream(80, {});
    const auto params = model::cast_params<double>(model::init_cnn_head(cfg, rng).params);
    const auto image = uniform_tensor({1, 8, 8}, -1, 1, rng).cast<double>();
    BasicTensor<double> readout({1, 5});
    std::uniform_real_distribution<double> dist(-1, 1);
    for (auto& v : readout.data()) v = dist(rng);
    LossBuilder build = [&](BasicGraph<double>& g, const model::VarMap<double>& p) {
      return ops::sum(ops::mul(model::cnn_head_forward<double>(g, cfg, p, g.constant(image)), g.constant(readout)));
    };
    record("cnn head", testing::gradient_check(params, build, 100, rng));
  }
  const double secs = seconds_since(t0);
  o.require(secs < 120, "took " + fmt("%.1f", secs) + " s");
  if (o.pass)
    o.detail = std::to_string(checks) + " checks x 100 probes, worst " + fmt("%.2e", worst) + "; " + fmt("%.1f s", secs);
  return o;
}

Outcome protocol_algebra() {
  Outcome o;
  // unify_tails against an elementwise mean taken in double
  for (std::uint64_t trial = 0; trial < 10; ++trial) {
    Rng rng = make_stream(90, {trial});
    const auto cfg = protocol::tail_config_for(static_cast<TaskKind>(trial % 3), {1, 16, 16, 8, 8});
    std::vector<model::ParamSet> tails;
    for (std::size_t c = 0; c < 2 + trial % 4; ++c) tails.push_back(model::init_tail(cfg, rng).params);
    std::vector<const model::ParamSet*> ptrs;
    for (const auto& t : tails) ptrs.push_back(&t);
    const auto unified = protocol::unify_tails(ptrs);
    for (const auto& [name, t] : unified)
      for (std::size_t i = 0; i < t.size(); ++i) {
        double sum = 0;
        for (const auto& s : tails) sum += s.at(name)[i];
        if (t[i] != static_cast<float>(sum / tails.size())) {
          o.require(false, "unify differs from mean at " + name);
          break;
        }
      }
  }

  // body update against the retained per-client gradients
  tasks::WorldConfig w;
  w.image_size = 16;
  w.tasks = {task(TaskKind::Classification, "cls", {5, 4, 6}, 6), task(TaskKind::Severity, "sev", {3}, 6),
             task(TaskKind::Segmentation, "seg", {4, 2}, 6)};
  const auto world = tasks::generate_world(w);
  protocol::RunConfig cfg;
  cfg.rounds = 6;
  cfg.interval = 3;
  cfg.batch = 2;
  cfg.body = small_body();
  double accumulate_err = 0;
  for (auto s : {Strategy::PFESTA, Strategy::FESTA}) {
    cfg.strategy = s;
    protocol::Simulation sim(cfg, world);
    const std::vector<double> per_task = {3, 1, 2};
    for (int r = 0; r < 3; ++r) {
      sim.run_round();
      const auto& trace = sim.last_body_update();
      for (const auto& [name, t] : trace.applied)
        for (std::size_t i = 0; i < t.size(); ++i) {
          double sum = 0;
          for (const auto& [k, g] : trace.per_client) sum += g.at(name)[i] / per_task[k];
          accumulate_err = std::max(accumulate_err, std::abs(sum / 3.0 - t[i]));
        }
    }
  }
  o.require(accumulate_err <= 1e-6, "body update off by " + fmt("%.2e", accumulate_err));

  // federated averaging with one client and n = 1 against central training
  tasks::WorldConfig w1;
  w1.image_size = 16;
  w1.tasks = {task(TaskKind::Classification, "cls", {8}, 6)};
  const auto world1 = tasks::generate_world(w1);
  protocol::RunConfig fl;
  fl.strategy = Strategy::FL;
  fl.rounds = 12;
  fl.interval = 1;
  fl.batch = 3;
  fl.body = small_body();
  protocol::Simulation sim(fl, world1);
  auto head = sim.client_head(0).params, body = sim.client_body(0).params, tail = sim.tail(0).params;
  const auto head_cfg = fl.head_config(16);
  const auto tail_cfg = sim.tail(0).config;
  const auto& data = world1.tasks[0].clients[0];
  protocol::BatchSampler sampler(fl.seed, 0, data.size());
  const std::size_t n = head_cfg.n_tokens();
  double loss_err = 0;
  for (std::size_t r = 1; r <= fl.rounds; ++r) {
    BasicGraph<double> g;
    const auto hp = model::cast_params<double>(head), bp = model::cast_params<double>(body),
               tp = model::cast_params<double>(tail);
    const auto hv = model::bind(g, hp, "h.", true), bv = model::bind(g, bp, "b.", true),
               tv = model::bind(g, tp, "t.", true);
    const auto idx = sampler.next(fl.batch);
    std::vector<BasicVar<double>> tokens;
    for (auto i : idx) tokens.push_back(model::embed_patches(g, head_cfg, hv, data[i].image, true));
    const auto out = model::body_forward(g, fl.body, bv, ops::concat_rows(tokens), n);
    BasicVar<double> total;
    for (std::size_t j = 0; j < idx.size(); ++j) {
      const auto l = protocol::task_loss(g, TaskKind::Classification,
                                         model::tail_forward(g, tail_cfg, tv, ops::slice_rows(out, j * n, (j + 1) * n)),
                                         data[idx[j]].label.cast<double>());
      total = j == 0 ? l : ops::add(total, l);
    }
    const auto mean = ops::scale(total, 1.0 / idx.size());
    const auto grads = g.backward(mean);
    for (auto* p : {&head, &body, &tail}) {
      const std::string prefix = p == &head ? "h." : p == &body ? "b." : "t.";
      for (auto& [name, t] : *p) {
        const auto& gr = grads.at(prefix + name);
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(t[i] - fl.lr * gr[i]);
      }
    }
    sim.run_round();
    loss_err = std::max(loss_err, std::abs(sim.finish().loss_curve(0).back() - mean.value()[0]));
  }
  o.require(loss_err <= 1e-6, "federated single client loss off by " + fmt("%.2e", loss_err));
  if (o.pass)
    o.detail = "unify exact; body update error " + fmt("%.1e", accumulate_err) + "; single-client loss error " +
               fmt("%.1e", loss_err);
  return o;
}

Outcome frozen_head_contract() {
  Outcome o;
  tasks::WorldConfig w;
  w.tasks = {task(TaskKind::Classification, "cls", {6, 5}, 6), task(TaskKind::Severity, "sev", {4}, 6)};
  const auto world = tasks::generate_world(w);
  protocol::RunConfig cfg;
  cfg.rounds = 200;
  cfg.interval = 10;
  protocol::Simulation sim(cfg, world);
  const auto head = sim.head().params;
  const auto cache = sim.feature_cache();
  for (std::size_t r = 0; r < cfg.rounds; ++r) sim.run_round();
  o.require(sim.head().params == head, "head parameters changed");
  o.require(sim.feature_cache() == cache, "feature cache changed");
  const auto& ledger = sim.ledger();
  for (auto kind : {transport::MessageKind::HeadWeightsUpload, transport::MessageKind::HeadWeightsBroadcast,
                    transport::MessageKind::HeadGradient})
    o.require(ledger.frames(kind) == 0, std::string(transport::to_string(kind)) + " frames emitted");
  o.require(ledger.frames(transport::MessageKind::FeatureUpload) == 15, "features uploaded more than once");
  if (o.pass) o.detail = "200 rounds; head and " + std::to_string(cache.size()) + " cached entries byte-identical; no head frames";
  return o;
}

Outcome multitask_trend() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  double mtl = 0, stl = 0, sl = 0;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    tasks::WorldConfig w;
    w.seed = seed;
    auto cls = task(TaskKind::Classification, "cls", {10, 10}, 90);
    cls.class_weights = {{1, 1, 0}, {1, 0, 1}};
    w.tasks = {cls, task(TaskKind::Severity, "sev", {300, 300}, 30), task(TaskKind::Segmentation, "seg", {150, 150}, 30)};
    const auto multi = tasks::generate_world(w);
    w.tasks = {cls};
    const auto single = tasks::generate_world(w);

    protocol::RunConfig cfg;
    cfg.rounds = 300;
    cfg.interval = 10;
    cfg.lr = 0.05f;
    cfg.seed = seed;
    cfg.grad_scales = {{TaskKind::Classification, 1}, {TaskKind::Severity, 2}, {TaskKind::Segmentation, 1}};
    const double a = protocol::run(cfg, multi).final_metric("cls");
    const double b = protocol::run(cfg, single).final_metric("cls");
    cfg.strategy = Strategy::SL;
    const double c = protocol::run(cfg, multi).final_metric("cls");
    mtl += a / 3;
    stl += b / 3;
    sl += c / 3;
    per_seed += " s" + std::to_string(seed) + "=" + fmt("%.3f", a) + "/" + fmt("%.3f", b) + "/" + fmt("%.3f", c);
  }
  const double secs = seconds_since(t0);
  o.require(mtl >= stl, "multi-task mean below single-task mean");
  o.require(mtl > sl && stl > sl, "split-learning baseline not exceeded");
  o.require(secs < 600, "took " + fmt("%.0f", secs) + " s");
  o.detail += (o.detail.empty() ? "" : "; ") + std::string("mean AUC multi ") + fmt("%.3f", mtl) + " single " +
              fmt("%.3f", stl) + " split " + fmt("%.3f", sl) + " (" + per_seed.substr(1) + "); " + fmt("%.0f s", secs);
  return o;
}

Outcome attack_oracle() {
  Outcome o;
  attack::TrialConfig cfg;
  cfg.seed = 5;
  cfg.trials = 200;
  const auto rows = attack::run_grid(cfg);
  const double n_tokens = static_cast<double>(cfg.head.n_tokens());
  o.require(n_tokens == 16, "expected 16 tokens");
  o.require(rows.size() == 8, "expected 8 scenarios");
  double full_mse = -1, worst_acc = 0;
  for (const auto& r : rows) {
    if (r.knows.count() == 3) full_mse = r.mse;
    if (!r.knows.permutation && !r.knows.pos_embedding) worst_acc = std::max(worst_acc, r.assignment_accuracy);
  }
  o.require(full_mse >= 0 && full_mse < 1e-8, "full-knowledge MSE " + fmt("%.2e", full_mse));
  o.require(worst_acc <= 2.0 / n_tokens, "assignment accuracy " + fmt("%.3f", worst_acc));
  std::size_t pairs = 0;
  for (const auto& more : rows)
    for (const auto& less : rows)
      if (&more != &less && more.knows.covers(less.knows)) {
        ++pairs;
        o.require(attack::ordered_by_knowledge(more, less), less.knows.label() + " beats " + more.knows.label());
      }
  if (o.pass)
    o.detail = "full-knowledge MSE " + fmt("%.1e", full_mse) + "; accuracy without key or positions <= " +
               fmt("%.3f", worst_acc) + "; monotone over " + std::to_string(pairs) + " pairs";
  return o;
}

Outcome metric_oracles() {
  Outcome o;
  double worst = 0;
  for (std::uint64_t trial = 0; trial < 1000; ++trial) {
    Rng rng = make_stream(100, {trial});
    const std::size_t n = 2 + rng() % 199;
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = static_cast<double>(rng() % 20) / 4;  // coarse, so ties occur
      labels[i] = static_cast<int>(rng() % 2);
    }
    labels[0] = 0;
    labels[1] = 1;
    double wins = 0, pairs = 0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = 0; q < n; ++q)
        if (labels[p] == 1 && labels[q] == 0) {
          pairs += 1;
          wins += scores[p] > scores[q] ? 1.0 : scores[p] == scores[q] ? 0.5 : 0.0;
        }
    worst = std::max(worst, std::abs(tasks::auc(scores, labels) - wins / pairs));
  }
  o.require(worst <= 1e-12, "AUC off by " + fmt("%.2e", worst));
  o.require(tasks::auc({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}) == 0.75, "AUC worked example");
  o.require(tasks::mse(Tensor({2}, {0, 2}), Tensor({2}, {1, 0})) == 2.5, "MSE worked example");
  o.require(tasks::mse(Tensor({3}, {2, 3, 4}), Tensor({3}, {1, 2, 3})) == 1.0, "MSE unit offset");
  const Tensor a({10}, {1, 1, 1, 1, 0, 0, 0, 0, 0, 0}), b({10}, {1, 1, 1, 0, 1, 1, 1, 0, 0, 0});
  o.require(std::abs(tasks::dice(a, b) - 0.6) < 1e-15, "Dice 4/6/3 example");
  o.require(tasks::dice(a, a) == 1.0 && tasks::dice(Tensor({4}), Tensor({4})) == 1.0, "Dice identical or empty");
  o.require(tasks::dice(Tensor({4}, {1, 1, 0, 0}), Tensor({4}, {0, 0, 1, 1})) == 0.0, "Dice disjoint");
  if (o.pass) o.detail = "AUC worst " + fmt("%.1e", worst) + " over 1000 instances; Dice and MSE examples exact";
  return o;
}

transport::Message fuzzed_message(Rng& rng) {
  using transport::MessageKind;
  std::uniform_int_distribution<int> kind_pick(0, transport::kMessageKinds - 1), small(0, 4), dim(1, 5);
  std::uniform_int_distribution<std::uint64_t> any64;
  std::uniform_real_distribution<float> val(-1e3f, 1e3f);
  transport::Message m;
  m.kind = static_cast<MessageKind>(kind_pick(rng));
  m.round = any64(rng);
  m.client_id = static_cast<std::uint32_t>(any64(rng));
  m.task_id = static_cast<std::uint16_t>(any64(rng));
  if (m.kind == MessageKind::Control) return m;
  for (int i = 0, n = small(rng); i < n; ++i) {
    Shape shape(1 + small(rng) % 3);
    for (auto& d : shape) d = dim(rng);
    Tensor t(shape);
    for (auto& v : t.data()) v = val(rng);
    m.payload.push_back(std::move(t));
    if (transport::is_per_sample(m.kind)) m.sample_ids.push_back(any64(rng));
  }
  return m;
}

Outcome wire_round_trip() {
  Outcome o;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    Rng rng = make_stream(seed, {0x77});
    const auto m = fuzzed_message(rng);
    const auto frame = transport::encode(m);
    if (!(transport::decode(frame) == m) || frame.size() != transport::encoded_size(m)) {
      o.require(false, "message " + std::to_string(seed) + " did not round-trip");
      break;
    }
  }
  transport::Message m;
  m.kind = transport::MessageKind::TailWeightsUpload;
  m.round = 0x0102030405060708ull;
  m.client_id = 7;
  m.task_id = 2;
  m.payload = {Tensor({1, 1}, {1.0f})};
  const std::vector<std::uint8_t> expected = {0x54, 0x53, 0x46, 0x70, 0x01, 0x03, 0x08, 0x07, 0x06, 0x05, 0x04, 0x03,
                                              0x02, 0x01, 0x07, 0x00, 0x00, 0x00, 0x02, 0x00, 0x00, 0x00, 0x00, 0x00,
                                              0x01, 0x02, 0x01, 0x00, 0x00, 0x00, 0x01, 0x00, 0x00, 0x00, 0x00, 0x00,
                                              0x80, 0x3F};
  o.require(transport::encode(m) == expected, "1.0 fixture bytes differ from the documented layout");
  if (o.pass) o.detail = "1000 fuzzed messages round-trip; 38-byte fixture matches byte for byte";
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"cost-formula oracle equivalence", ledger_matches_closed_forms},
      {"reference cost table reproduction", reference_cost_table},
      {"permutation equivariance", permutation_equivariance},
      {"gradient correctness", gradients_match_finite_differences},
      {"protocol algebra", protocol_algebra},
      {"frozen-head contract", frozen_head_contract},
      {"multi-task trend", multitask_trend},
      {"attack oracle", attack_oracle},
      {"metric oracles", metric_oracles},
      {"wire round-trip", wire_round_trip},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
