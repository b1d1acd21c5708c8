#include "pfesta/cli/app.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "pfesta/attack/inversion.hpp"
#include "pfesta/cli/run_file.hpp"
#include "pfesta/costs/costs.hpp"
#include "pfesta/engine/byte_io.hpp"
#include "pfesta/protocol/simulation.hpp"

namespace pfesta::cli {
namespace {

namespace fs = std::filesystem;

// Raised for problems the user fixes by changing the command or its inputs.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct RunOptions {
  std::string config;
  std::vector<std::string> sets;
  std::string strategy, transport, out;
  std::vector<std::string> ablate;
  std::optional<std::uint64_t> seed, rounds, interval, batch, clients, eval_every;
  std::optional<double> lr;
};

void add_run_options(CLI::App* cmd, RunOptions& o) {
  cmd->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  cmd->add_option("-c,--config", o.config, "key = value run file; flags below override its keys");
  cmd->add_option("--strategy", o.strategy, "pfesta, festa, fl or sl");
  cmd->add_option("--seed", o.seed, "seed for initialisation, batching and permutation keys");
  cmd->add_option("--rounds", o.rounds, "training rounds");
  cmd->add_option("--n,--interval", o.interval, "unify every n rounds; must divide the round count");
  cmd->add_option("--batch", o.batch, "samples per client per round");
  cmd->add_option("--lr", o.lr, "learning rate");
  cmd->add_option("--eval-every", o.eval_every, "evaluate every k rounds (0: first and last only)");
  cmd->add_option("--clients", o.clients, "clients per task, repeating the last configured size");
  cmd->add_option("--ablate", o.ablate, "learnable_head, no_permutation or no_pos_embedding (repeatable)")
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  cmd->add_option("--transport", o.transport, "inprocess or socket");
  cmd->add_option("--set", o.sets, "any run-file key as key=value (repeatable, applied last)")
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
}

RunFile resolve(const RunOptions& o) {
  RunFile f = default_run_file();
  if (!o.config.empty()) f = apply(util::KeyValueDoc::load(o.config), f);
  util::KeyValueDoc flags = util::KeyValueDoc::parse("", "command line");
  if (!o.strategy.empty()) flags.set("strategy", o.strategy);
  if (o.seed) flags.set("seed", std::to_string(*o.seed));
  if (o.rounds) flags.set("rounds", std::to_string(*o.rounds));
  if (o.interval) flags.set("interval", std::to_string(*o.interval));
  if (o.batch) flags.set("batch", std::to_string(*o.batch));
  if (o.eval_every) flags.set("eval_every", std::to_string(*o.eval_every));
  if (o.lr) {
    std::ostringstream s;
    s.precision(9);
    s << *o.lr;
    flags.set("lr", s.str());
  }
  if (!o.ablate.empty()) {
    std::string joined;
    for (const auto& a : o.ablate) joined += (joined.empty() ? "" : "+") + a;
    flags.set("ablations", joined);
  }
  if (!o.transport.empty()) flags.set("transport", o.transport);
  f = apply(flags, f);
  if (o.clients) set_clients_per_task(f, *o.clients);
  if (!o.sets.empty()) {
    std::string text;
    for (const auto& s : o.sets) {
      if (s.find('=') == std::string::npos) throw UsageError("--set expects key=value, got '" + s + "'");
      text += s + '\n';
    }
    f = apply(util::KeyValueDoc::parse(text, "--set"), f);
  }
  f.run.validate();
  return f;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

fs::path output_dir(const std::string& requested, const std::string& fallback_name) {
  fs::path dir = requested.empty() ? fs::path(output_root()) / fallback_name : fs::path(requested);
  fs::create_directories(dir);
  return dir;
}

int cmd_run(const RunOptions& o, std::ostream& out) {
  const RunFile f = resolve(o);
  const auto world = tasks::generate_world(f.world);
  const auto dir =
      output_dir(o.out, std::string(costs::to_string(f.run.strategy)) + "-seed" + std::to_string(f.run.seed));
  write_file(dir / "config.txt", to_text(f));
  const auto report = protocol::run(f.run, world);
  write_file(dir / "metrics.csv", report.metrics_csv());
  write_file(dir / "traffic.csv", report.ledger.to_csv());
  write_file(dir / "summary.txt", report.summary());
  out << report.summary() << "output = " << dir.string() << '\n';
  return kExitOk;
}

int verify_run(const fs::path& dir, std::ostream& out) {
  const RunFile f = apply(util::KeyValueDoc::load((dir / "config.txt").string()));
  f.run.validate();
  const auto world = tasks::generate_world(f.world);
  const auto ledger = transport::TrafficLedger::from_csv(read_file(dir / "traffic.csv"));
  bool pass = true;
  for (std::uint32_t c = 0; c < world.client_count(); ++c) {
    const auto check = costs::verify_ledger(f.run.traffic_strategy(), protocol::cost_params_for(f.run, world, c), ledger, c);
    out << "client " << c << ": " << (check.pass() ? "PASS" : "FAIL") << '\n' << check.to_text();
    pass = pass && check.pass();
  }
  out << (pass ? "PASS" : "FAIL") << " traffic of " << dir.string() << " matches the closed forms\n";
  return pass ? kExitOk : kExitRuntime;
}

}  // namespace

std::string output_root() {
  const char* env = std::getenv(kOutputRootEnv);
  return env && *env ? env : "runs";
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Split-federated multi-task ViT simulator: training runs, traffic accounting and inversion attacks."};
  app.footer(std::string("Outputs go under $") + kOutputRootEnv +
             " (default ./runs) unless --out is given.\nExit codes: 0 success, 1 runtime failure, 2 configuration error.");
  app.require_subcommand(1);

  RunOptions run_opts;
  auto* run = app.add_subcommand("run", "train one strategy; writes metrics.csv, traffic.csv, summary.txt, config.txt");
  add_run_options(run, run_opts);
  run->add_option("-o,--out", run_opts.out, "output directory");

  RunOptions dump_opts;
  auto* dump = app.add_subcommand("dump-config", "print the resolved run file");
  add_run_options(dump, dump_opts);

  RunOptions world_opts;
  auto* gen = app.add_subcommand("gen-world", "generate the synthetic world and dump its images and labels");
  add_run_options(gen, world_opts);
  gen->add_option("-o,--out", world_opts.out, "output directory");

  std::string constants, verify;
  bool csv = false, no_provenance = false;
  auto* cost = app.add_subcommand("costs", "per-client communication cost table, or check a recorded run");
  cost->add_option("constants", constants, "cost constants file (key = value)");
  cost->add_option("--verify", verify, "run directory whose traffic.csv is checked against the closed forms");
  cost->add_flag("--csv", csv, "print CSV instead of the aligned table");
  cost->add_flag("--no-provenance", no_provenance, "omit the derivation notes of the constants");

  attack::TrialConfig trial;
  std::string attack_out;
  auto* atk = app.add_subcommand("attack", "linear inversion attack over every knowledge combination");
  atk->add_option("--seed", trial.seed, "seed for heads, keys and images");
  atk->add_option("--trials", trial.trials, "images per scenario");
  atk->add_option("-o,--out", attack_out, "output directory for attack.csv");

  auto* old_out = std::cout.rdbuf(out.rdbuf());
  auto* old_err = std::cerr.rdbuf(err.rdbuf());
  struct Restore {
    std::streambuf *o, *e;
    ~Restore() {
      std::cout.rdbuf(o);
      std::cerr.rdbuf(e);
    }
  } restore{old_out, old_err};

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run) return cmd_run(run_opts, out);
    if (*dump) {
      out << to_text(resolve(dump_opts));
      return kExitOk;
    }
    if (*gen) {
      const RunFile f = resolve(world_opts);
      const auto world = tasks::generate_world(f.world);
      const auto dir = output_dir(world_opts.out, "world-seed" + std::to_string(f.world.seed));
      tasks::dump_world(world, dir.string());
      out << tasks::manifest(world) << "output = " << dir.string() << '\n';
      return kExitOk;
    }
    if (*cost) {
      if (constants.empty() && verify.empty()) throw UsageError("costs needs a constants file or --verify <run dir>");
      if (!constants.empty()) {
        const auto c = costs::load_constants_file(constants);
        out << (csv ? costs::cost_table_csv(c) : costs::cost_table_text(c, !no_provenance));
      }
      return verify.empty() ? kExitOk : verify_run(verify, out);
    }
    if (*atk) {
      if (trial.trials == 0) throw UsageError("--trials must be positive");
      const auto text = attack::report_csv(attack::run_grid(trial));
      const auto dir = output_dir(attack_out, "attack-seed" + std::to_string(trial.seed));
      write_file(dir / "attack.csv", text);
      out << text << "output = " << dir.string() << '\n';
      return kExitOk;
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const protocol::ConfigError& e) {
    err << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const util::ParseError& e) {
    err << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const tasks::WorldError& e) {
    err << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const costs::CostsError& e) {
    err << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitRuntime;
}

}  // namespace pfesta::cli
