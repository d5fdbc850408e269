#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "uspec/runconfig.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace uspec;

namespace {

constexpr int kExitPass = 0;
constexpr int kExitFail = 1;       // security failure / witness found
constexpr int kExitConfig = 2;     // config error or theorem precondition violation
constexpr int kExitViolation = 3;  // invariant monitor violation

struct CommonArgs {
  std::string gadget;
  std::string program;
  std::string config;
  std::string strategy;
  std::string mode = "secure";
  std::size_t n = 0;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::size_t jobs = 1;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--gadget", args.gadget, "corpus gadget name");
  cmd->add_option("--program", args.program, "uasm program file");
  cmd->add_option("--config", args.config, "JSON run config");
  cmd->add_option("--mode", args.mode, "secure | insecure")->check(CLI::IsMember({"secure", "insecure"}));
  cmd->add_option("-n,--steps", args.n, "step bound");
  cmd->add_option("--seed", args.seed, "master seed")->each([&](const std::string&) { args.seed_set = true; });
  cmd->add_option("--strategy", args.strategy,
                  "round-robin | seeded[:k] | always-taken | constant:<v> | script:<file> | attack");
  cmd->add_option("--jobs", args.jobs, "parallel experiment cells");
}

RunSetup build_setup(const CommonArgs& args) {
  RunSetup setup;
  if (!args.gadget.empty()) {
    setup = setup_from_gadget(args.gadget);
  } else if (!args.program.empty()) {
    setup = setup_from_program_file(args.program);
  } else if (args.config.empty()) {
    throw ConfigError("one of --gadget, --program or --config is required");
  }
  if (!args.config.empty()) {
    std::ifstream in(args.config);
    if (!in) throw ConfigError("cannot open config " + args.config);
    json cfg = json::parse(in);
    apply_config_json(setup, cfg, fs::path(args.config).parent_path().string());
  }
  if (args.n) setup.n = args.n;
  if (args.seed_set) {
    setup.seed = args.seed;
  } else if (const char* env = std::getenv("PROSPECT_SIM_SEED")) {
    setup.seed = std::strtoull(env, nullptr, 10);
  }
  setup.mode = args.mode == "insecure" ? Mode::Insecure : Mode::Secure;
  setup.jobs = args.jobs;
  if (!args.strategy.empty()) {
    StrategySpec s = parse_strategy(args.strategy);
    if (s.name == "attack" && s.script.empty()) {
      if (!setup.script) throw ConfigError("no recommended attack script for this source");
      s = *setup.script;
    }
    setup.strategy = s;
  }
  return setup;
}

void write_or_print(const std::string& path, const std::string& content) {
  if (path.empty()) {
    std::cout << content;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  out << content;
}

int cmd_run(const CommonArgs& args, bool arch, const std::string& out_path,
            const std::string& mu_path, std::size_t rob_cap,
            const std::vector<Word>& secret_override) {
  RunSetup setup = build_setup(args);
  std::vector<Word> secrets;
  for (const auto& s : setup.sites) secrets.push_back(s.domain.empty() ? 0 : s.domain.front());
  for (std::size_t i = 0; i < secret_override.size() && i < secrets.size(); ++i)
    secrets[i] = secret_override[i];

  if (arch) {
    ArchConfig c0 = apply_secrets(setup.base, setup.sites, secrets);
    ArchRun run = arch_run(*setup.program, setup.partition, std::move(c0), setup.n);
    write_or_print(out_path, observation_jsonl(run));
    std::cerr << "arch: " << run.steps_taken << " steps, " << run.obs.size()
              << " observations, " << run.decl.size() << " declassified value(s)\n";
    return kExitPass;
  }

  HwOptions opts = setup.hw_options();
  if (rob_cap) opts.rob_capacity = rob_cap;
  HwSim sim(setup.program, setup.partition, setup.strategy, opts);
  for (std::size_t r = 0; r < setup.base.reg.size(); ++r)
    sim.set_reg(static_cast<RegId>(r), setup.base.reg[r]);
  for (const auto& [a, v] : setup.base.mem.cells) sim.set_mem(a, v);
  for (std::size_t i = 0; i < setup.sites.size(); ++i) {
    const SecretSite& s = setup.sites[i];
    if (s.kind == SecretSite::Kind::MemCell) sim.set_mem(s.addr, secrets[i]);
    else sim.set_reg(s.reg, LabeledValue{secrets[i], SecLevel::H});
  }

  HwRunResult run = sim.run(setup.n);
  write_or_print(out_path, trace_jsonl(sim, run));
  if (!mu_path.empty()) {
    std::ofstream mu(mu_path, std::ios::binary);
    mu << sim.mc().canonical_bytes();
  }
  std::cerr << "hw: " << run.steps.size() << " steps, " << run.decl.size()
            << " declassified value(s), " << run.violation_count << " monitor violation(s)\n";
  if (run.status != StepStatus::Ok) {
    std::cerr << "run aborted: declassification underflow\n";
    return kExitFail;
  }
  return run.violation_count ? kExitViolation : kExitPass;
}

int cmd_verify(const CommonArgs& args, const std::string& kind, std::size_t seeds,
               std::size_t pairs, const std::string& out_path) {
  RunSetup setup = build_setup(args);
  if (seeds) setup.seeds = seeds;
  if (pairs) setup.pairs = pairs;
  ExperimentSpec spec = setup.experiment();

  if (kind == "ct" || kind == "ctdecl") {
    CtCheckSpec ct;
    ct.program = setup.program.get();
    ct.partition = setup.partition;
    ct.base = setup.base;
    ct.sites = setup.sites;
    ct.steps = setup.n;
    ct.sample_budget = setup.pairs;
    ct.seed = setup.seed;
    Verdict v = kind == "ct" ? check_constant_time(ct) : check_ct_up_to_decl(ct);
    json j;
    j["kind"] = kind;
    j["source"] = setup.source_name;
    j["status"] = v.pass ? "pass" : "fail";
    j["pairs_checked"] = v.pairs_checked;
    j["n"] = v.steps;
    if (v.counterexample) {
      j["counterexample"] = {{"secrets_a", v.counterexample->secrets_a},
                             {"secrets_b", v.counterexample->secrets_b},
                             {"step", v.counterexample->step},
                             {"detail", v.counterexample->detail}};
    }
    write_or_print(out_path, j.dump(2) + "\n");
    return v.pass ? kExitPass : kExitFail;
  }

  SecVerdict v;
  if (kind == "thm1") v = theorem1_check(spec);
  else if (kind == "thm2") v = theorem2_check(spec);
  else if (kind == "classical") v = classical_decl_check(spec);
  else throw ConfigError("unknown verification kind " + kind);

  write_or_print(out_path, verdict_json(v, kind, setup).dump(2) + "\n");
  if (v.status == SecVerdict::Status::PreconditionViolation) return kExitConfig;
  if (v.violation_count) return kExitViolation;
  return v.pass() ? kExitPass : kExitFail;
}

int cmd_attack(const CommonArgs& args, std::size_t budget, const std::string& out_path) {
  if (args.gadget.empty()) throw ConfigError("attack requires --gadget");
  RunSetup setup = build_setup(args);
  const Gadget& g = get_gadget(args.gadget);
  LeakSearchResult res = leak_search(g, setup.mode, budget ? budget : setup.budget,
                                     setup.n, setup.seed);
  json j;
  j["gadget"] = args.gadget;
  j["mode"] = setup.mode == Mode::Secure ? "secure" : "insecure";
  j["samples"] = res.samples;
  j["found"] = res.found;
  if (res.witness) j["witness"] = witness_json(*res.witness, setup);
  write_or_print(out_path, j.dump(2) + "\n");
  return res.found ? kExitFail : kExitPass;
}

int cmd_corpus(const std::string& dir) {
  fs::create_directories(dir);
  for (const auto& name : gadget_names()) {
    const Gadget& g = get_gadget(name);
    std::ofstream uasm(fs::path(dir) / (name + ".uasm"), std::ios::binary);
    uasm << g.source;
    std::ofstream meta(fs::path(dir) / (name + ".json"), std::ios::binary);
    meta << gadget_json(g).dump(2) << "\n";
    if (g.attack_script.kind == StrategySpec::Kind::Scripted) {
      std::ofstream script(fs::path(dir) / (name + ".attack.json"), std::ios::binary);
      script << script_to_json(g.attack_script.script).dump(2) << "\n";
    }
  }
  return kExitPass;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"speculative out-of-order uasm simulator and non-interference checker"};
  app.require_subcommand(1);

  CommonArgs run_args, verify_args, attack_args;
  bool run_arch = false;
  std::string run_out, run_mu, verify_out, attack_out, corpus_dir = "corpus";
  std::size_t rob_cap = 0, verify_seeds = 0, verify_pairs = 0, attack_budget = 0;
  std::string verify_kind = "thm1";

  CLI::App* run = app.add_subcommand("run", "simulate one configuration and dump a step trace");
  add_common(run, run_args);
  run->add_flag("--arch", run_arch, "use the sequential semantics");
  std::vector<Word> run_secrets;
  run->add_option("--secrets", run_secrets, "secret value per site, in site order")->delimiter(',');
  run->add_option("--out", run_out, "trace output file (JSONL, default stdout)");
  run->add_option("--mu-log", run_mu, "write the canonical microarchitectural log");
  run->add_option("--rob-cap", rob_cap, "reorder buffer capacity (default unbounded)");

  CLI::App* verify = app.add_subcommand("verify", "run a differential security experiment");
  add_common(verify, verify_args);
  verify->add_option("--kind", verify_kind, "thm1 | thm2 | classical | ct | ctdecl")
      ->check(CLI::IsMember({"thm1", "thm2", "classical", "ct", "ctdecl"}));
  verify->add_option("--seeds", verify_seeds, "strategy seeds");
  verify->add_option("--pairs", verify_pairs, "low-equivalent pairs per strategy");
  verify->add_option("--out", verify_out, "verdict output file (JSON, default stdout)");

  CLI::App* attack = app.add_subcommand("attack", "search for a microarchitectural divergence witness");
  add_common(attack, attack_args);
  attack->add_option("--budget", attack_budget, "sample budget (default 10000)");
  attack->add_option("--out", attack_out, "witness output file (JSON, default stdout)");

  CLI::App* corpus = app.add_subcommand("corpus", "export the gadget corpus as .uasm/.json files");
  corpus->add_option("--dir", corpus_dir, "output directory");

  CLI::App* list = app.add_subcommand("list", "list corpus gadgets");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(run_args, run_arch, run_out, run_mu, rob_cap, run_secrets);
    if (verify->parsed())
      return cmd_verify(verify_args, verify_kind, verify_seeds, verify_pairs, verify_out);
    if (attack->parsed()) return cmd_attack(attack_args, attack_budget, attack_out);
    if (corpus->parsed()) return cmd_corpus(corpus_dir);
    if (list->parsed()) {
      for (const auto& name : gadget_names()) {
        const Gadget& g = get_gadget(name);
        std::cout << name << " [";
        for (std::size_t i = 0; i < g.tags.size(); ++i)
          std::cout << (i ? " " : "") << g.tags[i];
        std::cout << "] " << g.note << "\n";
      }
      return kExitPass;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const UnknownGadget& e) {
    std::cerr << e.what() << "\n";
    return kExitConfig;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}
