#include "pfesta/cli/run_file.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>

namespace pfesta::cli {
namespace {

using protocol::ConfigError;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

// Shortest text that reads back as the same float.
std::string fmt(float v) {
  char buf[32];
  for (int digits = 6; digits <= 9; ++digits) {
    std::snprintf(buf, sizeof buf, "%.*g", digits, static_cast<double>(v));
    if (std::strtof(buf, nullptr) == v) break;
  }
  return buf;
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? sep : "") + parts[i];
  return out;
}

tasks::TaskSetup task(tasks::TaskKind kind, std::string name, std::vector<std::size_t> sizes, std::size_t test) {
  tasks::TaskSetup t;
  t.kind = kind;
  t.name = std::move(name);
  t.client_sizes = std::move(sizes);
  t.test_size = test;
  return t;
}

std::string weights_text(const std::vector<std::array<double, tasks::kClasses>>& weights) {
  std::vector<std::string> rows;
  for (const auto& w : weights) rows.push_back(fmt(w[0]) + ":" + fmt(w[1]) + ":" + fmt(w[2]));
  return rows.empty() ? "balanced" : join(rows, "; ");
}

std::vector<std::array<double, tasks::kClasses>> parse_weights(const std::string& text, const std::string& what) {
  std::vector<std::array<double, tasks::kClasses>> out;
  if (util::trim(text) == "balanced") return out;
  for (const auto& row : util::split_list(text, ';')) {
    const auto cells = util::split_list(row, ':');
    if (cells.size() != tasks::kClasses) throw ConfigError(what + ": '" + row + "' needs 3 weights a:b:c");
    std::array<double, tasks::kClasses> w{};
    for (std::size_t c = 0; c < tasks::kClasses; ++c) w[c] = util::parse_double(cells[c], what);
    out.push_back(w);
  }
  return out;
}

std::vector<std::size_t> parse_sizes(const std::string& text, const std::string& what) {
  std::vector<std::size_t> out;
  for (const auto& s : util::split_list(text, ',')) out.push_back(util::parse_uint(s, what));
  if (out.empty()) throw ConfigError(what + ": at least one client is needed");
  return out;
}

model::OptimizerKind parse_optimizer(const std::string& s, const std::string& what) {
  if (s == "sgd") return model::OptimizerKind::Sgd;
  if (s == "adam") return model::OptimizerKind::Adam;
  throw ConfigError(what + ": unknown optimizer '" + s + "' (sgd, adam)");
}

protocol::Ablations parse_ablations(const std::string& s, const std::string& what) {
  protocol::Ablations a;
  if (util::trim(s) == "none") return a;
  for (const auto& name : util::split_list(s, '+')) {
    if (name == "learnable_head") a.learnable_head = true;
    else if (name == "no_permutation") a.no_permutation = true;
    else if (name == "no_pos_embedding") a.no_pos_embedding = true;
    else throw ConfigError(what + ": unknown ablation '" + name + "'");
  }
  return a;
}

tasks::TaskSetup* find_task(RunFile& f, const std::string& name) {
  for (auto& t : f.world.tasks)
    if (t.name == name) return &t;
  return nullptr;
}

}  // namespace

RunFile default_run_file() {
  RunFile f;
  f.world.image_size = 32;
  auto cls = task(tasks::TaskKind::Classification, "classification", {10, 10}, 90);
  cls.class_weights = {{1, 1, 0}, {1, 0, 1}};
  f.world.tasks = {cls, task(tasks::TaskKind::Severity, "severity", {300, 300}, 30),
                   task(tasks::TaskKind::Segmentation, "segmentation", {150, 150}, 30)};
  f.run.lr = 0.05f;
  f.run.grad_scales = {{tasks::TaskKind::Classification, 1}, {tasks::TaskKind::Severity, 2},
                       {tasks::TaskKind::Segmentation, 1}};
  return f;
}

RunFile apply(const util::KeyValueDoc& doc, RunFile base) {
  RunFile f = std::move(base);
  auto where = [&](const util::Entry& e) { return doc.source() + ":" + std::to_string(e.line) + ": " + e.key; };

  if (doc.contains("tasks")) {
    const auto& e = doc.at("tasks");
    f.world.tasks.clear();
    for (const auto& name : util::split_list(e.value, ',')) {
      if (find_task(f, name)) throw ConfigError(where(e) + ": task '" + name + "' listed twice");
      auto t = task(tasks::TaskKind::Classification, name, {1}, 60);
      if (auto kind = tasks::task_from_string(name)) t.kind = *kind;
      f.world.tasks.push_back(t);
    }
    if (f.world.tasks.empty()) throw ConfigError(where(e) + ": no tasks listed");
  }

  using Setter = std::function<void(const std::string&, const std::string&)>;
  auto& r = f.run;
  const auto u = [](const std::string& v, const std::string& w) { return util::parse_uint(v, w); };
  const std::map<std::string, Setter> keys = {
      {"strategy",
       [&](const std::string& v, const std::string& w) {
         auto s = costs::strategy_from_string(v);
         if (!s) throw ConfigError(w + ": unknown strategy '" + v + "' (pfesta, festa, fl, sl)");
         r.strategy = *s;
       }},
      {"rounds", [&](const std::string& v, const std::string& w) { r.rounds = u(v, w); }},
      {"interval", [&](const std::string& v, const std::string& w) { r.interval = u(v, w); }},
      {"batch", [&](const std::string& v, const std::string& w) { r.batch = u(v, w); }},
      {"lr", [&](const std::string& v, const std::string& w) { r.lr = static_cast<float>(util::parse_double(v, w)); }},
      {"warmup_steps", [&](const std::string& v, const std::string& w) { r.warmup_steps = u(v, w); }},
      {"seed", [&](const std::string& v, const std::string& w) { r.seed = u(v, w); }},
      {"optimizer", [&](const std::string& v, const std::string& w) { r.optimizer = parse_optimizer(v, w); }},
      {"eval_every", [&](const std::string& v, const std::string& w) { r.eval_every = u(v, w); }},
      {"ablations", [&](const std::string& v, const std::string& w) { r.ablations = parse_ablations(v, w); }},
      {"patch", [&](const std::string& v, const std::string& w) { r.patch = u(v, w); }},
      {"body.dim", [&](const std::string& v, const std::string& w) { r.body.dim = u(v, w); }},
      {"body.layers", [&](const std::string& v, const std::string& w) { r.body.layers = u(v, w); }},
      {"body.heads", [&](const std::string& v, const std::string& w) { r.body.heads = u(v, w); }},
      {"body.ffn_dim", [&](const std::string& v, const std::string& w) { r.body.ffn_dim = u(v, w); }},
      {"transport",
       [&](const std::string& v, const std::string& w) {
         auto t = transport::transport_from_string(v);
         if (!t) throw ConfigError(w + ": unknown transport '" + v + "'");
         r.transport = *t;
       }},
      {"socket_address",
       [&](const std::string& v, const std::string& w) {
         try {
           r.socket_address = transport::SocketAddress::parse(v);
         } catch (const std::exception& ex) {
           throw ConfigError(w + ": " + ex.what());
         }
       }},
      {"world.seed", [&](const std::string& v, const std::string& w) { f.world.seed = u(v, w); }},
      {"world.image_size", [&](const std::string& v, const std::string& w) { f.world.image_size = u(v, w); }},
      {"constants", [&](const std::string& v, const std::string&) { f.constants = v; }},
      {"tasks", [](const std::string&, const std::string&) {}},
  };

  for (const auto& e : doc.entries()) {
    const std::string w = where(e);
    try {
      if (auto it = keys.find(e.key); it != keys.end()) {
        it->second(e.value, w);
        continue;
      }
      if (e.key.starts_with("grad_scale.")) {
        auto kind = tasks::task_from_string(e.key.substr(11));
        if (!kind) throw ConfigError(w + ": unknown task kind");
        r.grad_scales[*kind] = static_cast<float>(util::parse_double(e.value, w));
        continue;
      }
      if (e.key.starts_with("task.")) {
        const auto dot = e.key.rfind('.');
        const std::string name = e.key.substr(5, dot - 5), field = e.key.substr(dot + 1);
        auto* t = dot > 5 ? find_task(f, name) : nullptr;
        if (!t) throw ConfigError(w + ": no task named '" + name + "' (see 'tasks')");
        if (field == "kind") {
          auto kind = tasks::task_from_string(e.value);
          if (!kind) throw ConfigError(w + ": unknown task kind '" + e.value + "'");
          t->kind = *kind;
        } else if (field == "clients") {
          t->client_sizes = parse_sizes(e.value, w);
        } else if (field == "class_weights") {
          t->class_weights = parse_weights(e.value, w);
        } else if (field == "pool_per_class") {
          t->pool_per_class = u(e.value, w);
        } else if (field == "test_size") {
          t->test_size = u(e.value, w);
        } else {
          throw ConfigError(w + ": unknown task field '" + field + "'");
        }
        continue;
      }
      throw ConfigError(w + ": unknown key");
    } catch (const util::ParseError& ex) {
      throw ConfigError(ex.what());
    }
  }
  return f;
}

std::string to_text(const RunFile& f) {
  const auto& r = f.run;
  std::string out;
  auto line = [&](const std::string& k, const std::string& v) { out += k + " = " + v + '\n'; };
  line("strategy", std::string(costs::to_string(r.strategy)));
  line("rounds", std::to_string(r.rounds));
  line("interval", std::to_string(r.interval));
  line("batch", std::to_string(r.batch));
  line("lr", fmt(r.lr));
  line("warmup_steps", std::to_string(r.warmup_steps));
  line("seed", std::to_string(r.seed));
  line("optimizer", r.optimizer == model::OptimizerKind::Adam ? "adam" : "sgd");
  line("eval_every", std::to_string(r.eval_every));
  line("ablations", r.ablations.to_string());
  for (const auto& [kind, scale] : r.grad_scales) line("grad_scale." + std::string(tasks::to_string(kind)), fmt(scale));
  out += '\n';
  line("patch", std::to_string(r.patch));
  line("body.dim", std::to_string(r.body.dim));
  line("body.layers", std::to_string(r.body.layers));
  line("body.heads", std::to_string(r.body.heads));
  line("body.ffn_dim", std::to_string(r.body.ffn_dim));
  line("transport", std::string(transport::to_string(r.transport)));
  line("socket_address", r.socket_address.to_string());
  out += '\n';
  line("world.seed", std::to_string(f.world.seed));
  line("world.image_size", std::to_string(f.world.image_size));
  std::vector<std::string> names;
  for (const auto& t : f.world.tasks) names.push_back(t.name);
  line("tasks", join(names, ", "));
  for (const auto& t : f.world.tasks) {
    const std::string p = "task." + t.name + ".";
    std::vector<std::string> sizes;
    for (auto s : t.client_sizes) sizes.push_back(std::to_string(s));
    line(p + "kind", std::string(tasks::to_string(t.kind)));
    line(p + "clients", join(sizes, ", "));
    line(p + "class_weights", weights_text(t.class_weights));
    line(p + "pool_per_class", std::to_string(t.pool_per_class));
    line(p + "test_size", std::to_string(t.test_size));
  }
  if (!f.constants.empty()) line("constants", f.constants);
  return out;
}

void set_clients_per_task(RunFile& file, std::size_t n) {
  if (n == 0) throw ConfigError("--clients must be at least 1");
  for (auto& t : file.world.tasks) {
    t.client_sizes.resize(n, t.client_sizes.back());
    if (!t.class_weights.empty()) t.class_weights.resize(n, t.class_weights.back());
  }
}

}  // namespace pfesta::cli
