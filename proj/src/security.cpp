#include "uspec/security.hpp"

#include <algorithm>
#include <atomic>
#include <functional>
#include <thread>

#include "uspec/rng.hpp"

namespace uspec {

ExperimentSpec ExperimentSpec::for_gadget(const Gadget& g) {
  ExperimentSpec spec;
  spec.program = g.program;
  spec.partition = g.partition;
  spec.base = g.base_config();
  spec.sites = g.sites;
  if (g.attack_script.kind == StrategySpec::Kind::Scripted) spec.script = g.attack_script;
  return spec;
}

std::vector<std::pair<std::vector<Word>, std::vector<Word>>> make_pairs(
    const std::vector<SecretSite>& sites, std::size_t count, std::uint64_t seed) {
  std::vector<std::pair<std::vector<Word>, std::vector<Word>>> out;
  if (sites.empty()) {
    out.push_back({{}, {}});
    return out;
  }
  // small domains first: enumerate every ordered pair before sampling
  std::uint64_t assignments = 1;
  for (const auto& s : sites) {
    assignments *= std::max<std::size_t>(s.domain.size(), 1);
    if (assignments > 64) break;
  }
  if (assignments <= 64 && assignments * assignments <= count) {
    std::vector<std::vector<Word>> all;
    std::vector<std::size_t> idx(sites.size(), 0);
    for (;;) {
      std::vector<Word> v(sites.size());
      for (std::size_t i = 0; i < sites.size(); ++i) v[i] = sites[i].domain[idx[i]];
      all.push_back(std::move(v));
      std::size_t i = 0;
      for (; i < sites.size(); ++i) {
        if (++idx[i] < sites[i].domain.size()) break;
        idx[i] = 0;
      }
      if (i == sites.size()) break;
    }
    for (const auto& a : all)
      for (const auto& b : all) out.push_back({a, b});
    return out;
  }
  SplitMix64 rng(hash_combine(seed, 0x9a125ULL));
  for (std::size_t k = 0; k < count; ++k) {
    std::vector<Word> a(sites.size()), b(sites.size());
    for (std::size_t i = 0; i < sites.size(); ++i) {
      a[i] = sites[i].domain[rng.below(sites[i].domain.size())];
      b[i] = sites[i].domain[rng.below(sites[i].domain.size())];
    }
    out.push_back({std::move(a), std::move(b)});
  }
  return out;
}

namespace {

HwSim make_sim(const ExperimentSpec& spec, const StrategySpec& strategy,
               const std::vector<Word>& secrets) {
  HwOptions opts;
  opts.mode = spec.mode;
  opts.monitors = spec.monitors;
  HwSim sim(spec.program, spec.partition, strategy, opts);
  for (std::size_t r = 0; r < spec.base.reg.size(); ++r) sim.set_reg(static_cast<RegId>(r), spec.base.reg[r]);
  for (const auto& [a, v] : spec.base.mem.cells) sim.set_mem(a, v);
  for (std::size_t i = 0; i < spec.sites.size(); ++i) {
    const SecretSite& s = spec.sites[i];
    if (s.kind == SecretSite::Kind::MemCell)
      sim.set_mem(s.addr, secrets[i]);
    else
      sim.set_reg(s.reg, LabeledValue{secrets[i], SecLevel::H});
  }
  return sim;
}

std::vector<StrategySpec> strategy_cells(const ExperimentSpec& spec) {
  std::vector<StrategySpec> out;
  if (spec.script) out.push_back(*spec.script);
  for (std::size_t k = 0; k < spec.seeds; ++k)
    out.push_back(StrategySpec::seeded(hash_combine(spec.seed, k)));
  return out;
}

Witness make_witness(std::size_t cell, const StrategySpec& strat,
                     const std::vector<Word>& sa, const std::vector<Word>& sb,
                     const MicroContext& ma, const MicroContext& mb,
                     const MicroContext::Divergence& d) {
  Witness w;
  w.cell = cell;
  w.strategy = strat;
  w.secrets_a = sa;
  w.secrets_b = sb;
  w.event_index = d.index;
  w.event_a = d.a;
  w.event_b = d.b;
  std::size_t steps = 0;
  const auto& log = ma.log().size() >= d.index ? ma.log() : mb.log();
  for (std::size_t i = 0; i < d.index && i < log.size(); ++i)
    if (log[i].kind == MicroEvent::Kind::Preamble) ++steps;
  w.step = steps;
  return w;
}

// Runs `fn` over every (strategy, pair) cell, in deterministic cell order.
// Returns the lowest-index witness, plus the number of cells inspected.
struct CellSweep {
  std::optional<Witness> witness;
  std::size_t cells = 0;
  std::size_t violations = 0;
  std::size_t vacuous = 0;
};

CellSweep sweep_cells(const ExperimentSpec& spec,
                      const std::vector<StrategySpec>& strategies,
                      const std::vector<std::pair<std::vector<Word>, std::vector<Word>>>& pairs,
                      const std::function<std::optional<Witness>(std::size_t, const StrategySpec&,
                                                                 const std::vector<Word>&,
                                                                 const std::vector<Word>&,
                                                                 std::size_t*, std::size_t*)>& fn) {
  const std::size_t total = strategies.size() * pairs.size();
  std::vector<std::optional<Witness>> results(total);
  std::vector<std::size_t> violations(total, 0);
  std::vector<std::size_t> vacuous(total, 0);

  auto run_cell = [&](std::size_t cell) {
    const StrategySpec& strat = strategies[cell / pairs.size()];
    const auto& pr = pairs[cell % pairs.size()];
    results[cell] = fn(cell, strat, pr.first, pr.second, &violations[cell], &vacuous[cell]);
  };

  std::size_t jobs = std::max<std::size_t>(spec.jobs, 1);
  if (jobs <= 1 || total <= 1) {
    for (std::size_t c = 0; c < total; ++c) run_cell(c);
  } else {
    std::vector<std::thread> workers;
    std::atomic<std::size_t> next{0};
    for (std::size_t t = 0; t < std::min(jobs, total); ++t)
      workers.emplace_back([&] {
        for (;;) {
          std::size_t c = next.fetch_add(1);
          if (c >= total) return;
          run_cell(c);
        }
      });
    for (auto& w : workers) w.join();
  }

  CellSweep out;
  out.cells = total;
  for (std::size_t c = 0; c < total; ++c) {
    out.violations += violations[c];
    out.vacuous += vacuous[c];
    if (!out.witness && results[c]) out.witness = results[c];
  }
  return out;
}

Verdict thm1_precondition(const ExperimentSpec& spec) {
  CtCheckSpec ct;
  ct.program = spec.program.get();
  ct.partition = spec.partition;
  ct.base = spec.base;
  ct.sites = spec.sites;
  ct.steps = spec.steps;
  ct.sample_budget = std::max<std::size_t>(spec.pairs, 16);
  ct.seed = spec.seed;
  return check_constant_time(ct);
}

Verdict thm2_precondition(const ExperimentSpec& spec) {
  CtCheckSpec ct;
  ct.program = spec.program.get();
  ct.partition = spec.partition;
  ct.base = spec.base;
  ct.sites = spec.sites;
  ct.steps = spec.steps;
  ct.sample_budget = std::max<std::size_t>(spec.pairs, 16);
  ct.seed = spec.seed;
  return check_ct_up_to_decl(ct);
}

} // namespace

std::pair<HwSim, HwSim> gen_low_equiv_pair(const ExperimentSpec& spec,
                                           const StrategySpec& strategy,
                                           const std::vector<Word>& secrets_a,
                                           const std::vector<Word>& secrets_b) {
  return {make_sim(spec, strategy, secrets_a), make_sim(spec, strategy, secrets_b)};
}

SecVerdict theorem1_check(const ExperimentSpec& spec) {
  SecVerdict v;
  Verdict pre = thm1_precondition(spec);
  if (!pre.pass) {
    v.status = SecVerdict::Status::PreconditionViolation;
    v.note = "program is not constant-time without declassification; the guarantee does not apply";
    return v;
  }

  auto strategies = strategy_cells(spec);
  auto pairs = make_pairs(spec.sites, spec.pairs, spec.seed);
  CellSweep sweep = sweep_cells(
      spec, strategies, pairs,
      [&](std::size_t cell, const StrategySpec& strat, const std::vector<Word>& sa,
          const std::vector<Word>& sb, std::size_t* viol,
          std::size_t*) -> std::optional<Witness> {
        auto [sim_a, sim_b] = gen_low_equiv_pair(spec, strat, sa, sb);
        HwRunResult ra = sim_a.run(spec.steps);
        HwRunResult rb = sim_b.run(spec.steps);
        *viol = ra.violation_count + rb.violation_count;
        auto d = MicroContext::diverge(sim_a.mc(), sim_b.mc());
        if (d) return make_witness(cell, strat, sa, sb, sim_a.mc(), sim_b.mc(), *d);
        // nothing secret may be declassified: the traces must agree (they are
        // empty for store-free programs)
        if (ra.decl != rb.decl) {
          Witness w;
          w.cell = cell;
          w.strategy = strat;
          w.secrets_a = sa;
          w.secrets_b = sb;
          w.event_a = "declassification traces differ";
          w.event_b = w.event_a;
          return w;
        }
        return std::nullopt;
      });

  v.cells_checked = sweep.cells;
  v.violation_count = sweep.violations;
  if (sweep.witness) {
    v.status = SecVerdict::Status::Fail;
    v.witness = sweep.witness;
  } else {
    v.note = "no counterexample found at budget";
  }
  return v;
}

SecVerdict theorem2_check(const ExperimentSpec& spec) {
  SecVerdict v;
  Verdict pre = thm2_precondition(spec);
  if (!pre.pass) {
    v.status = SecVerdict::Status::PreconditionViolation;
    v.note = "program is not constant-time up to declassification; the guarantee does not apply";
    return v;
  }

  auto strategies = strategy_cells(spec);
  auto pairs = make_pairs(spec.sites, spec.pairs, spec.seed);
  CellSweep sweep = sweep_cells(
      spec, strategies, pairs,
      [&](std::size_t cell, const StrategySpec& strat, const std::vector<Word>& sa,
          const std::vector<Word>& sb, std::size_t* viol,
          std::size_t*) -> std::optional<Witness> {
        auto [sim_a, sim_b] = gen_low_equiv_pair(spec, strat, sa, sb);
        HwRunResult ra = sim_a.run(spec.steps);
        sim_b.seed_patch(ra.decl);
        HwRunResult rb = sim_b.run(spec.steps);
        *viol = ra.violation_count + rb.violation_count;
        auto d = MicroContext::diverge(sim_a.mc(), sim_b.mc());
        if (d) return make_witness(cell, strat, sa, sb, sim_a.mc(), sim_b.mc(), *d);
        if (rb.status == StepStatus::DeclassUnderflow) {
          Witness w;
          w.cell = cell;
          w.strategy = strat;
          w.secrets_a = sa;
          w.secrets_b = sb;
          w.event_a = "declassification underflow in the patched run";
          w.event_b = w.event_a;
          w.step = sim_b.steps_done();
          return w;
        }
        if (!rb.residual.empty()) {
          Witness w;
          w.cell = cell;
          w.strategy = strat;
          w.secrets_a = sa;
          w.secrets_b = sb;
          w.event_a = "patched run left " + std::to_string(rb.residual.size()) +
                      " declassified values unconsumed";
          w.event_b = w.event_a;
          w.step = sim_b.steps_done();
          return w;
        }
        return std::nullopt;
      });

  v.cells_checked = sweep.cells;
  v.violation_count = sweep.violations;
  if (sweep.witness) {
    v.status = SecVerdict::Status::Fail;
    v.witness = sweep.witness;
  } else {
    v.note = "no counterexample found at budget";
  }
  return v;
}

SecVerdict classical_decl_check(const ExperimentSpec& spec) {
  SecVerdict v;
  auto strategies = strategy_cells(spec);
  auto pairs = make_pairs(spec.sites, spec.pairs, spec.seed);
  CellSweep sweep = sweep_cells(
      spec, strategies, pairs,
      [&](std::size_t cell, const StrategySpec& strat, const std::vector<Word>& sa,
          const std::vector<Word>& sb, std::size_t* viol,
          std::size_t* vacuous) -> std::optional<Witness> {
        auto [sim_a, sim_b] = gen_low_equiv_pair(spec, strat, sa, sb);
        HwRunResult ra = sim_a.run(spec.steps);
        HwRunResult rb = sim_b.run(spec.steps);
        *viol = ra.violation_count + rb.violation_count;
        if (ra.decl != rb.decl) {
          // the classical condition only constrains pairs that agree on
          // their declassification traces
          *vacuous = 1;
          return std::nullopt;
        }
        auto d = MicroContext::diverge(sim_a.mc(), sim_b.mc());
        if (d) return make_witness(cell, strat, sa, sb, sim_a.mc(), sim_b.mc(), *d);
        return std::nullopt;
      });

  v.cells_checked = sweep.cells;
  v.vacuous_cells = sweep.vacuous;
  v.violation_count = sweep.violations;
  if (sweep.witness) {
    v.status = SecVerdict::Status::Fail;
    v.witness = sweep.witness;
  } else {
    v.note = std::to_string(sweep.vacuous) + " of " + std::to_string(sweep.cells) +
             " cells vacuous (differing declassification traces)";
  }
  return v;
}

LeakSearchResult leak_search(const Gadget& gadget, Mode mode, std::size_t budget,
                             std::size_t steps, std::uint64_t seed) {
  ExperimentSpec spec = ExperimentSpec::for_gadget(gadget);
  spec.mode = mode;
  spec.steps = steps;
  spec.seed = seed;
  spec.monitors = false;

  auto pairs = make_pairs(spec.sites, std::max<std::size_t>(spec.sites.empty() ? 1 : 4, 4), seed);

  LeakSearchResult res;
  std::vector<StrategySpec> strategies;
  if (spec.script) strategies.push_back(*spec.script);

  std::size_t next_seed = 0;
  std::size_t strat_idx = 0;
  while (res.samples < budget) {
    if (strat_idx >= strategies.size())
      strategies.push_back(StrategySpec::seeded(hash_combine(seed, next_seed++)));
    const StrategySpec& strat = strategies[strat_idx];
    for (const auto& [sa, sb] : pairs) {
      if (res.samples >= budget) break;
      ++res.samples;
      auto [sim_a, sim_b] = gen_low_equiv_pair(spec, strat, sa, sb);
      sim_a.run(spec.steps);
      sim_b.run(spec.steps);
      auto d = MicroContext::diverge(sim_a.mc(), sim_b.mc());
      if (d) {
        res.found = true;
        res.witness =
            make_witness(res.samples - 1, strat, sa, sb, sim_a.mc(), sim_b.mc(), *d);
        return res;
      }
    }
    ++strat_idx;
  }
  return res;
}

bool self_patching_identity(const Gadget& gadget, const std::vector<Word>& secrets,
                            const StrategySpec& strategy, std::size_t steps, Mode mode,
                            std::string* why) {
  HwOptions opts;
  opts.mode = mode;
  opts.monitors = false;
  HwSim a = gadget.make_sim(secrets, strategy, opts);
  HwRunResult ra = a.run(steps);

  HwSim b = gadget.make_sim(secrets, strategy, opts);
  b.seed_patch(ra.decl);
  HwRunResult rb = b.run(steps);

  auto fail = [&](const std::string& msg) {
    if (why) *why = msg;
    return false;
  };
  if (rb.status != StepStatus::Ok) return fail("patched replay aborted");
  if (!rb.residual.empty()) return fail("patched replay did not consume the trace");
  if (!(a.mem() == b.mem())) return fail("memories differ");
  if (a.reg() != b.reg()) return fail("register maps differ");
  auto rob_equal = [](const ReorderBuffer& x, const ReorderBuffer& y) {
    if (x.size() != y.size()) return false;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i].kind != y[i].kind || x[i].dst != y[i].dst || x[i].tag != y[i].tag ||
          x[i].pc_incr != y[i].pc_incr)
        return false;
      if (!x[i].e1.structurally_equal(y[i].e1)) return false;
      if (x[i].kind == RobEntry::Kind::Store && !x[i].e2.structurally_equal(y[i].e2)) return false;
    }
    return true;
  };
  if (!rob_equal(a.rob(), b.rob())) return fail("reorder buffers differ");
  if (MicroContext::diverge(a.mc(), b.mc())) return fail("microarchitectural logs differ");
  return true;
}

} // namespace uspec
