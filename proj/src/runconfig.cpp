#include "uspec/runconfig.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

namespace uspec {

namespace fs = std::filesystem;
using nlohmann::json;

HwOptions RunSetup::hw_options() const {
  HwOptions opts;
  opts.mode = mode;
  opts.vartime_ops = vartime_ops;
  opts.rob_capacity = rob_capacity;
  return opts;
}

ExperimentSpec RunSetup::experiment() const {
  ExperimentSpec spec;
  spec.program = program;
  spec.partition = partition;
  spec.base = base;
  spec.sites = sites;
  spec.script = script;
  spec.steps = n;
  spec.seeds = seeds;
  spec.pairs = pairs;
  spec.mode = mode;
  spec.seed = seed;
  spec.jobs = jobs;
  return spec;
}

RunSetup setup_from_gadget(const std::string& name) {
  const Gadget& g = get_gadget(name);
  RunSetup s;
  s.source_name = name;
  s.program = g.program;
  s.partition = g.partition;
  s.base = g.base_config();
  s.sites = g.sites;
  if (g.attack_script.kind == StrategySpec::Kind::Scripted) s.script = g.attack_script;
  return s;
}

RunSetup setup_from_program_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open program file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  RunSetup s;
  s.source_name = path;
  s.program = std::make_shared<const Program>(parse_program(buf.str()));
  s.base.reg.assign(s.program->reg_count(), LabeledValue{0, SecLevel::L});
  s.base.reg[kPcReg] = LabeledValue{s.program->entrypoint, SecLevel::L};
  return s;
}

std::vector<ScriptStep> script_from_json(const json& j) {
  std::vector<ScriptStep> steps;
  const json& arr = j.contains("steps") ? j.at("steps") : j;
  if (!arr.is_array()) throw ConfigError("script: expected an array of steps");
  for (const auto& e : arr) {
    ScriptStep s;
    if (e.contains("next")) {
      s.next = parse_directive(e.at("next").get<std::string>());
      if (!s.next) throw ConfigError("script: bad directive " + e.at("next").dump());
    }
    if (e.contains("predict")) s.predict = e.at("predict").get<Word>();
    steps.push_back(std::move(s));
  }
  return steps;
}

json script_to_json(const std::vector<ScriptStep>& steps) {
  json arr = json::array();
  for (const auto& s : steps) {
    json e = json::object();
    if (s.next) e["next"] = directive_str(*s.next);
    if (s.predict) e["predict"] = *s.predict;
    arr.push_back(std::move(e));
  }
  return json{{"steps", std::move(arr)}};
}

StrategySpec parse_strategy(const std::string& text) {
  if (text == "round-robin") return StrategySpec::round_robin();
  if (text == "always-taken") return StrategySpec::always_taken();
  if (text.rfind("seeded", 0) == 0) {
    std::uint64_t seed = 0;
    if (text.size() > 7 && text[6] == ':') seed = std::stoull(text.substr(7));
    return StrategySpec::seeded(seed);
  }
  if (text.rfind("constant:", 0) == 0) return StrategySpec::constant(std::stoull(text.substr(9)));
  if (text.rfind("script:", 0) == 0) {
    std::string path = text.substr(7);
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open strategy script " + path);
    json j = json::parse(in);
    return StrategySpec::scripted(script_from_json(j), fs::path(path).stem().string());
  }
  if (text == "attack" || text == "recommended") {
    StrategySpec s; // resolved by the caller against the gadget
    s.kind = StrategySpec::Kind::Scripted;
    s.name = "attack";
    return s;
  }
  throw ConfigError("unknown strategy " + text);
}

namespace {

SecLevel level_from_json(const json& j) {
  std::string s = j.get<std::string>();
  if (s == "L" || s == "low" || s == "public") return SecLevel::L;
  if (s == "H" || s == "high" || s == "secret") return SecLevel::H;
  throw ConfigError("bad security level " + s);
}

SecretSite site_from_key(const RunSetup& setup, const std::string& key,
                         std::vector<Word> domain) {
  SecretSite s;
  s.domain = std::move(domain);
  if (key.rfind("mem:", 0) == 0) {
    s.kind = SecretSite::Kind::MemCell;
    s.addr = std::stoull(key.substr(4));
    return s;
  }
  if (key.rfind("reg:", 0) == 0) {
    s.kind = SecretSite::Kind::Register;
    auto r = setup.program->find_reg(key.substr(4));
    if (!r) throw ConfigError("secret_domains: unknown register " + key.substr(4));
    s.reg = *r;
    return s;
  }
  throw ConfigError("secret_domains keys must look like mem:<addr> or reg:<name>");
}

} // namespace

void apply_config_json(RunSetup& setup, const json& cfg, const std::string& base_dir) {
  if (cfg.contains("program")) {
    fs::path p = cfg.at("program").get<std::string>();
    if (p.is_relative()) p = fs::path(base_dir) / p;
    RunSetup fresh = setup_from_program_file(p.string());
    setup.source_name = fresh.source_name;
    setup.program = fresh.program;
    setup.base = fresh.base;
    setup.sites.clear();
    setup.partition = SecretPartition{};
  }
  if (!setup.program) throw ConfigError("no program given (gadget or config program path)");

  if (cfg.contains("secret_ranges")) {
    std::vector<std::pair<Word, Word>> ranges;
    for (const auto& r : cfg.at("secret_ranges"))
      ranges.push_back({r.at(0).get<Word>(), r.at(1).get<Word>()});
    setup.partition = SecretPartition::make(std::move(ranges));
  }
  if (cfg.contains("registers")) {
    for (const auto& [name, v] : cfg.at("registers").items()) {
      auto r = setup.program->find_reg(name);
      if (!r) throw ConfigError("registers: unknown register " + name);
      LabeledValue lv;
      if (v.is_object()) {
        lv.value = v.at("value").get<Word>();
        if (v.contains("level")) lv.level = level_from_json(v.at("level"));
      } else {
        lv.value = v.get<Word>();
      }
      setup.base.reg[*r] = lv;
    }
  }
  if (cfg.contains("memory")) {
    for (const auto& [addr, v] : cfg.at("memory").items())
      setup.base.mem.store(std::stoull(addr), v.get<Word>());
  }
  if (cfg.contains("secret_domains")) {
    setup.sites.clear();
    for (const auto& [key, dom] : cfg.at("secret_domains").items()) {
      std::vector<Word> values;
      for (const auto& v : dom) values.push_back(v.get<Word>());
      setup.sites.push_back(site_from_key(setup, key, std::move(values)));
    }
  }
  if (cfg.contains("n")) setup.n = cfg.at("n").get<std::size_t>();
  if (cfg.contains("budget")) setup.budget = cfg.at("budget").get<std::size_t>();
  if (cfg.contains("seeds")) setup.seeds = cfg.at("seeds").get<std::size_t>();
  if (cfg.contains("pairs")) setup.pairs = cfg.at("pairs").get<std::size_t>();
  if (cfg.contains("seed")) setup.seed = cfg.at("seed").get<std::uint64_t>();
  if (cfg.contains("mode")) {
    std::string m = cfg.at("mode").get<std::string>();
    if (m == "secure") setup.mode = Mode::Secure;
    else if (m == "insecure") setup.mode = Mode::Insecure;
    else throw ConfigError("mode must be secure or insecure");
  }
  if (cfg.contains("strategy")) {
    const json& st = cfg.at("strategy");
    if (st.is_string()) setup.strategy = parse_strategy(st.get<std::string>());
    else setup.strategy = StrategySpec::scripted(script_from_json(st), "inline");
  }
  if (cfg.contains("jobs")) setup.jobs = cfg.at("jobs").get<std::size_t>();
  if (cfg.contains("rob_capacity"))
    setup.rob_capacity = cfg.at("rob_capacity").get<std::size_t>();
  if (cfg.contains("vartime_ops")) {
    for (const auto& op : cfg.at("vartime_ops")) {
      std::string name = op.get<std::string>();
      bool known = false;
      for (BinOp b : {BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::And, BinOp::Or, BinOp::Xor,
                      BinOp::Shl, BinOp::Shr, BinOp::Eq, BinOp::Ult})
        if (name == binop_name(b)) {
          setup.vartime_ops.push_back(b);
          known = true;
        }
      if (!known) throw ConfigError("vartime_ops: unknown operator " + name);
    }
  }
}

json strategy_json(const StrategySpec& s) {
  json j;
  j["kind"] = s.describe();
  if (s.kind == StrategySpec::Kind::Scripted) j["script"] = script_to_json(s.script);
  return j;
}

json witness_json(const Witness& w, const RunSetup& setup) {
  json j;
  j["source"] = setup.source_name;
  j["cell"] = w.cell;
  j["strategy"] = strategy_json(w.strategy);
  j["secrets_a"] = w.secrets_a;
  j["secrets_b"] = w.secrets_b;
  j["divergence"] = {{"event_index", w.event_index},
                     {"step", w.step},
                     {"event_a", w.event_a},
                     {"event_b", w.event_b}};
  // replaying w.step + 1 steps reproduces the divergence
  j["replay"] = {{"n", w.step + 1},
                 {"seed", setup.seed},
                 {"mode", setup.mode == Mode::Secure ? "secure" : "insecure"}};
  return j;
}

json verdict_json(const SecVerdict& v, const std::string& kind, const RunSetup& setup) {
  json j;
  j["kind"] = kind;
  j["source"] = setup.source_name;
  switch (v.status) {
    case SecVerdict::Status::Pass: j["status"] = "pass"; break;
    case SecVerdict::Status::Fail: j["status"] = "fail"; break;
    case SecVerdict::Status::PreconditionViolation: j["status"] = "precondition-violation"; break;
  }
  j["cells_checked"] = v.cells_checked;
  j["vacuous_cells"] = v.vacuous_cells;
  j["monitor_violations"] = v.violation_count;
  j["budget"] = {{"n", setup.n}, {"seeds", setup.seeds}, {"pairs", setup.pairs},
                 {"seed", setup.seed}};
  j["mode"] = setup.mode == Mode::Secure ? "secure" : "insecure";
  if (!v.note.empty()) j["note"] = v.note;
  if (v.witness) j["witness"] = witness_json(*v.witness, setup);
  return j;
}

json gadget_json(const Gadget& g) {
  json j;
  j["name"] = g.name;
  j["program"] = g.name + ".uasm";
  json ranges = json::array();
  for (const auto& [lo, hi] : g.partition.ranges) ranges.push_back({lo, hi});
  j["secret_ranges"] = std::move(ranges);
  json regs = json::object();
  for (const auto& [r, v] : g.reg_init)
    regs[g.program->reg_names[r]] =
        v.level == SecLevel::L ? json(v.value)
                               : json{{"value", v.value}, {"level", "H"}};
  j["registers"] = std::move(regs);
  json mem = json::object();
  for (const auto& [a, v] : g.mem_init) mem[std::to_string(a)] = v;
  j["memory"] = std::move(mem);
  json domains = json::object();
  for (const auto& s : g.sites) {
    std::string key = s.kind == SecretSite::Kind::MemCell
                          ? "mem:" + std::to_string(s.addr)
                          : "reg:" + g.program->reg_names[s.reg];
    domains[key] = s.domain;
  }
  j["secret_domains"] = std::move(domains);
  j["tags"] = g.tags;
  j["note"] = g.note;
  if (g.attack_script.kind == StrategySpec::Kind::Scripted)
    j["attack_script"] = script_to_json(g.attack_script.script);
  return j;
}

std::string trace_jsonl(const HwSim& sim, const HwRunResult& run) {
  (void)sim;
  std::string out;
  for (std::size_t i = 0; i < run.steps.size(); ++i) {
    const StepResult& s = run.steps[i];
    json line;
    line["step"] = i;
    line["directive"] = directive_str(s.directive);
    line["rule"] = rule_name(s.rule);
    line["buf_size"] = s.buf_size;
    line["pc"] = s.pc;
    json leaks = json::array();
    for (Word w : s.leaks) leaks.push_back(w);
    line["leaks"] = std::move(leaks);
    json decl = json::array();
    if (s.decl) decl.push_back(*s.decl);
    line["decl"] = std::move(decl);
    if (s.predicted) line["predict"] = *s.predicted;
    if (s.retired_loc) line["retired"] = *s.retired_loc;
    if (!s.violations.empty()) line["violations"] = s.violations;
    out += line.dump();
    out += '\n';
  }
  return out;
}

std::string observation_jsonl(const ArchRun& run) {
  std::string out;
  for (std::size_t i = 0; i < run.obs.size(); ++i) {
    json line;
    line["step"] = i;
    line["obs"] = observation_str(run.obs[i]);
    out += line.dump();
    out += '\n';
  }
  return out;
}

} // namespace uspec
