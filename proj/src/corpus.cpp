#include "uspec/corpus.hpp"

#include <map>

namespace uspec {

namespace {

// Memory layout shared by the transient-execution gadgets:
// A occupies 0-15, the secret cell is 16, B starts at 17.
constexpr Word kSecretCell = 16;
constexpr Word kBBase = 17;

ScriptStep st(const char* d, std::optional<Word> predict = std::nullopt) {
  ScriptStep s;
  s.next = parse_directive(d);
  s.predict = predict;
  return s;
}

SecretSite mem_site(Word addr, std::vector<Word> domain) {
  SecretSite s;
  s.kind = SecretSite::Kind::MemCell;
  s.addr = addr;
  s.domain = std::move(domain);
  return s;
}

SecretSite reg_site(const Program& p, const std::string& name, std::vector<Word> domain) {
  SecretSite s;
  s.kind = SecretSite::Kind::Register;
  s.reg = *p.find_reg(name);
  s.domain = std::move(domain);
  return s;
}

RegId rid(const Program& p, const std::string& name) { return *p.find_reg(name); }

// The one-way mixing function used by the declassification gadgets,
// spelled as a uasm expression over register `r`.
std::string fmix(const std::string& r) {
  return "(" + r + " ^ (" + r + " >> 33)) * 0xff51afd7ed558ccd";
}

Gadget make_spectre_pht() {
  Gadget g;
  g.name = "spectre-pht";
  g.source =
      ".regs idx, x, t, y\n"
      "beqz idx < 16, Lend\n"
      "x <- load idx\n"
      "t <- x * 64\n"
      "y <- load 17 + t\n"
      "Lend:\n";
  g.program = std::make_shared<const Program>(parse_program(g.source));
  g.partition = SecretPartition::make({{kSecretCell, kSecretCell}});
  g.reg_init = {{rid(*g.program, "idx"), LabeledValue{16, SecLevel::L}}};
  g.sites = {mem_site(kSecretCell, {0, 1})};
  g.tags = {"ct_plain", "leaks_insecure"};
  g.note = "bounds check bypass: the branch is predicted into the body with idx just past A";
  g.attack_script = StrategySpec::scripted(
      {
          st("fetch", 1),     // beqz, predicted fall-through into the body
          st("fetch"),        // x <- load idx
          st("fetch"),        // t <- x * 64
          st("fetch"),        // y <- load 17 + t
          st("execute:2", 0), // predict x = 0
          st("execute:4"),    // t from the predicted x
          st("execute:6", 0), // predict y = 0
          st("execute:2"),    // resolve x against the secret cell (squashes on rollback)
          st("execute:6"),    // resolve y where the prediction survived
          st("fetch"),        // refetch the leak sequence after a rollback
          st("fetch"),
          st("execute:4"),    // t from the architecturally loaded x
          st("execute:6", 0), // predict the refetched y
          st("execute:6"),    // resolve it: blocked when sanitized
          st("execute:1"),    // branch resolves, misprediction rolls back
          st("retire"),
      },
      "pht-attack");
  return g;
}

Gadget make_spectre_btb() {
  Gadget g;
  g.name = "spectre-btb";
  g.source =
      ".regs f, x, z, t, y\n"
      "f <- Ltrusted\n"
      "x <- load 16\n"
      "jmp f\n"
      "Lleak:\n"
      "t <- x * 64\n"
      "y <- load 17 + t\n"
      "Ltrusted:\n"
      "z <- x + 1\n"
      "z <- z + 1\n";
  g.program = std::make_shared<const Program>(parse_program(g.source));
  g.partition = SecretPartition::make({{kSecretCell, kSecretCell}});
  g.sites = {mem_site(kSecretCell, {0, 1})};
  g.tags = {"ct_plain", "leaks_insecure"};
  g.note = "indirect jump predicted into the leak sequence while x holds an architectural secret";
  g.attack_script = StrategySpec::scripted(
      {
          st("fetch"),        // f <- Ltrusted
          st("fetch"),        // x <- load 16
          st("execute:3", 0), // predict x = 0
          st("execute:3"),    // resolve x (always rolled back on the secret cell)
          st("fetch", 3),     // jmp f, predicted to Lleak
          st("fetch"),        // t <- x * 64 (transient)
          st("execute:6"),    // t resolves from the secret-labeled x
          st("fetch"),        // y <- load 17 + t
          st("execute:8", 0), // predict y = 0
          st("execute:8"),    // resolve y: blocked when sanitized
          st("execute:5"),    // jmp resolves to Ltrusted, rollback
          st("retire"),
      },
      "btb-attack");
  return g;
}

Gadget make_spectre_stl() {
  Gadget g;
  g.name = "spectre-stl";
  g.source =
      ".regs x, t, y\n"
      "store 16, 0\n"
      "x <- load 16\n"
      "t <- x * 64\n"
      "y <- load 17 + t\n";
  g.program = std::make_shared<const Program>(parse_program(g.source));
  g.partition = SecretPartition::make({{kSecretCell, kSecretCell}});
  g.sites = {mem_site(kSecretCell, {0, 1})};
  g.tags = {"ct_plain", "leaks_insecure"};
  g.note = "store bypass: the load resolves against the stale secret before the sanitizing store retires";
  g.attack_script = StrategySpec::scripted(
      {
          st("fetch"),        // store 16, 0 (resolved at fetch)
          st("fetch"),        // x <- load 16
          st("execute:3", 0), // predict x = 0
          st("execute:3"),    // resolve x: stalls behind the store unless bypassed
          st("fetch"),        // t <- x * 64
          st("execute:5"),    // t
          st("fetch"),        // y <- load 17 + t
          st("execute:7", 0), // predict y = 0
          st("execute:7"),    // resolve y
          st("retire"),       // store retires, secret overwritten
          st("retire"),
          st("execute:1"),    // x resolves against the sanitized memory
          st("retire"),
      },
      "stl-attack");
  return g;
}

Gadget make_lvi() {
  Gadget g;
  g.name = "lvi";
  g.source =
      ".regs idx, x, t, y\n"
      "idx <- load 17\n"
      "x <- load idx\n"
      "t <- x * 64\n"
      "y <- load 17 + t\n";
  g.program = std::make_shared<const Program>(parse_program(g.source));
  g.partition = SecretPartition::make({{kSecretCell, kSecretCell}});
  g.mem_init = {{kBBase, 2}, {2, 2}}; // trusted_idx lives at B[0] and holds 2
  g.sites = {mem_site(kSecretCell, {0, 1})};
  g.tags = {"ct_plain", "leaks_insecure"};
  g.note = "load value injection: the trusted index load is predicted to 16, pointing the next load at the secret";
  g.attack_script = StrategySpec::scripted(
      {
          st("fetch"),         // idx <- load 17
          st("execute:1", 16), // inject idx = 16
          st("fetch"),         // x <- load idx
          st("execute:3", 0),  // predict x = 0
          st("execute:3"),     // resolve x at the injected address
          st("fetch"),         // t <- x * 64
          st("execute:5"),     // t
          st("fetch"),         // y <- load 17 + t
          st("execute:7", 0),  // predict y = 0
          st("execute:7"),     // resolve y: blocked when sanitized
          st("execute:1"),     // idx resolves to 2, injection rolls back
          st("retire"),
      },
      "lvi-attack");
  return g;
}

Gadget make_example2() {
  Gadget g;
  g.name = "example2";
  g.source =
      ".regs x, y\n"
      "x <- load 16\n"
      "y <- x + 4\n";
  g.program = std::make_shared<const Program>(parse_program(g.source));
  g.partition = SecretPartition::make({{kSecretCell, kSecretCell}});
  g.sites = {mem_site(kSecretCell, {0, 1})};
  g.tags = {"ct_plain", "rollback_demo"};
  g.note = "a correct prediction of secret memory still rolls back; committing would leak mem(16) == prediction";
  g.attack_script = StrategySpec::scripted(
      {
          st("fetch"),        // x <- load 16
          st("fetch"),        // y <- x + 4
          st("execute:1", 0), // predict x = 0
          st("execute:3"),    // y computed from the prediction
          st("execute:1"),    // resolve x: rollback even when the prediction was right
          st("retire"),
          st("retire"),
          st("retire"),
      },
      "example2-schedule");
  return g;
}

Gadget make_listing2() {
  Gadget g;
  g.name = "listing2";
  g.source =
      ".regs s, c1, c2, c3, t, d, x, u\n"
      "t <- " + fmix("s") + "\n" +
      "store 8, t\n"
      "d <- load 8\n"
      "beqz c1, L1\n"
      "x <- load d\n"
      "L1:\n"
      "beqz c2, L2\n"
      "x <- load s\n"
      "L2:\n"
      "beqz c3, L3\n"
      "u <- " + fmix("s") + "\n" +
      "x <- load u\n"
      "L3:\n";
  g.program = std::make_shared<const Program>(parse_program(g.source));
  g.partition = SecretPartition::make({});
  g.reg_init = {{rid(*g.program, "c1"), LabeledValue{1, SecLevel::L}}};
  g.sites = {reg_site(*g.program, "s", {0, 1})};
  g.tags = {"ct_up_to_decl", "leaks_insecure"};
  g.note = "declassifies f(s) by storing it to public memory; loading the declassified value is fine, touching s or a recomputed f(s) is not";
  g.attack_script = StrategySpec::scripted(
      {
          st("fetch"),          // t <- f(s)
          st("fetch"),          // store 8, t
          st("fetch"),          // d <- load 8
          st("fetch", 4),       // beqz c1: predicted into the allowed body (correct)
          st("fetch"),          // x <- load d
          st("fetch", 6),       // beqz c2: predicted into the blocked body (wrong)
          st("fetch"),          // x <- load s
          st("execute:11", 0),  // predict the blocked load
          st("execute:11"),     // resolve it: sanitized address is undefined
          st("execute:1"),      // t
          st("execute:3"),      // store operands
          st("retire"),         // t
          st("retire"),
          st("retire"),         // store retires and declassifies f(s)
          st("retire"),
          st("execute:1", 0),   // d predicted
          st("execute:1"),      // d resolves to the (patched) declassified value
          st("retire"),
          st("retire"),
          st("execute:1"),      // beqz c1 resolves, prediction was correct
          st("retire"),
      },
      "listing2-attack");
  return g;
}

Gadget make_listing3() {
  Gadget g;
  g.name = "listing3";
  g.source =
      ".regs m, v1, t, x\n"
      "t <- " + fmix("m") + "\n" +
      "store 8, t\n"
      "beqz v1, Lend\n"
      "x <- load m\n"
      "Lend:\n";
  g.program = std::make_shared<const Program>(parse_program(g.source));
  g.partition = SecretPartition::make({});
  g.sites = {reg_site(*g.program, "m", {0, 1})};
  g.tags = {"ct_up_to_decl", "classical_decl_demo"};
  g.note = "f is injective, so equal declassification traces force equal secrets: the classical condition passes vacuously while the patched check exposes the speculative leak of m";
  g.attack_script = StrategySpec::scripted(
      {
          st("fetch"),        // t <- f(m)
          st("fetch"),        // store 8, t
          st("fetch", 3),     // beqz v1: predicted into the dead body
          st("fetch"),        // x <- load m
          st("execute:6", 0), // predict x
          st("execute:6"),    // resolve x: sanitized address is undefined
          st("execute:1"),    // t
          st("execute:3"),    // store operands
          st("retire"),       // t
          st("retire"),
          st("retire"),       // store retires and declassifies f(m)
          st("retire"),
          st("execute:1"),    // branch resolves, misprediction rolls back
          st("retire"),
      },
      "listing3-attack");
  return g;
}

Gadget make_spt_snippet() {
  Gadget g;
  g.name = "spt-snippet";
  g.source =
      ".regs a, c, x1, x2, z1, z2\n"
      "x1 <- load a\n"
      "x2 <- load x1\n"
      "beqz c, Lend\n"
      "z1 <- load x1\n"
      "z2 <- load x2\n"
      "Lend:\n";
  g.program = std::make_shared<const Program>(parse_program(g.source));
  g.partition = SecretPartition::make({{kSecretCell, kSecretCell}});
  g.reg_init = {{rid(*g.program, "a"), LabeledValue{24, SecLevel::L}},
                {rid(*g.program, "c"), LabeledValue{1, SecLevel::L}}};
  g.mem_init = {{24, 25}, {25, 26}};
  g.sites = {mem_site(kSecretCell, {0, 1})};
  g.tags = {"ct_plain"};
  g.note = "taint-tracking comparison snippet: both dependent loads stay public here, so speculation proceeds";
  g.attack_script = StrategySpec::round_robin();
  return g;
}

std::map<std::string, Gadget> build_catalog() {
  std::map<std::string, Gadget> m;
  for (Gadget g : {make_spectre_pht(), make_spectre_btb(), make_spectre_stl(), make_lvi(),
                   make_example2(), make_listing2(), make_listing3(), make_spt_snippet()})
    m.emplace(g.name, std::move(g));
  return m;
}

const std::map<std::string, Gadget>& catalog() {
  static const std::map<std::string, Gadget> m = build_catalog();
  return m;
}

} // namespace

bool Gadget::has_tag(const std::string& t) const {
  for (const auto& x : tags)
    if (x == t) return true;
  return false;
}

ArchConfig Gadget::base_config() const {
  ArchConfig c;
  c.reg.assign(program->reg_count(), LabeledValue{0, SecLevel::L});
  c.reg[kPcReg] = LabeledValue{program->entrypoint, SecLevel::L};
  for (const auto& [r, v] : reg_init) c.reg[r] = v;
  for (const auto& [a, v] : mem_init) c.mem.store(a, v);
  return c;
}

HwSim Gadget::make_sim(const std::vector<Word>& secrets, StrategySpec strategy,
                       HwOptions opts) const {
  HwSim sim(program, partition, std::move(strategy), std::move(opts));
  for (const auto& [r, v] : reg_init) sim.set_reg(r, v);
  for (const auto& [a, v] : mem_init) sim.set_mem(a, v);
  for (std::size_t i = 0; i < sites.size(); ++i) {
    const SecretSite& s = sites[i];
    if (s.kind == SecretSite::Kind::MemCell)
      sim.set_mem(s.addr, secrets[i]);
    else
      sim.set_reg(s.reg, LabeledValue{secrets[i], SecLevel::H});
  }
  return sim;
}

CtCheckSpec Gadget::ct_spec(std::size_t steps, std::size_t budget, std::uint64_t seed) const {
  CtCheckSpec spec;
  spec.program = program.get();
  spec.partition = partition;
  spec.base = base_config();
  spec.sites = sites;
  spec.steps = steps;
  spec.sample_budget = budget;
  spec.seed = seed;
  return spec;
}

const Gadget& get_gadget(const std::string& name) {
  const auto& m = catalog();
  auto it = m.find(name);
  if (it == m.end()) throw UnknownGadget(name);
  return it->second;
}

std::vector<std::string> gadget_names() {
  std::vector<std::string> out;
  for (const auto& [k, _] : catalog()) out.push_back(k);
  return out;
}

} // namespace uspec
