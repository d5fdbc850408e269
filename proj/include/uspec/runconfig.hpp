#pragma once

#include <optional>
#include <string>

#include <json.hpp>

#include "uspec/corpus.hpp"
#include "uspec/security.hpp"

namespace uspec {

// Everything a CLI invocation needs, assembled from a gadget or a program
// file plus an optional JSON config and flag overrides.
struct RunSetup {
  std::string source_name; // gadget name or program path
  std::shared_ptr<const Program> program;
  SecretPartition partition;
  ArchConfig base;
  std::vector<SecretSite> sites;
  StrategySpec strategy = StrategySpec::round_robin();
  std::optional<StrategySpec> script; // recommended attack schedule, if any
  std::size_t n = 500;
  std::size_t budget = 10000;
  std::size_t seeds = 100;
  std::size_t pairs = 20;
  std::uint64_t seed = 0;
  Mode mode = Mode::Secure;
  std::size_t jobs = 1;
  std::vector<BinOp> vartime_ops;
  std::optional<std::size_t> rob_capacity;

  HwOptions hw_options() const;
  ExperimentSpec experiment() const;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

RunSetup setup_from_gadget(const std::string& name);
RunSetup setup_from_program_file(const std::string& path);

// JSON run-config: program path, secret_ranges, register/memory init,
// secret_domains, n, budget, seed, strategy, mode.
void apply_config_json(RunSetup& setup, const nlohmann::json& cfg,
                       const std::string& base_dir);

StrategySpec parse_strategy(const std::string& text);
std::vector<ScriptStep> script_from_json(const nlohmann::json& j);
nlohmann::json script_to_json(const std::vector<ScriptStep>& steps);

nlohmann::json strategy_json(const StrategySpec& s);
nlohmann::json witness_json(const Witness& w, const RunSetup& setup);
nlohmann::json verdict_json(const SecVerdict& v, const std::string& kind,
                            const RunSetup& setup);
nlohmann::json gadget_json(const Gadget& g);

// One JSON object per step: {step, directive, rule, buf_size, pc, leaks, decl}.
std::string trace_jsonl(const HwSim& sim_before_run, const HwRunResult& run);

std::string observation_jsonl(const ArchRun& run);

} // namespace uspec
