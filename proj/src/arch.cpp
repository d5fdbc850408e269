#include "uspec/arch.hpp"

#include "uspec/rng.hpp"

namespace uspec {

LabeledValue ArchConfig::eval(const Expr& e) const {
  switch (e.kind()) {
    case Expr::Kind::Lit: return e.lit();
    case Expr::Kind::Reg: return reg[e.reg()];
    case Expr::Kind::Bin: {
      LabeledValue a = eval(e.lhs());
      LabeledValue b = eval(e.rhs());
      return LabeledValue{apply_binop(e.op(), a.value, b.value), join(a.level, b.level)};
    }
  }
  return LabeledValue{};
}

std::string observation_str(const Observation& o) {
  switch (o.kind) {
    case Observation::Kind::Branch: return o.value ? "branch(taken)" : "branch(not-taken)";
    case Observation::Kind::Jump: return "jump(" + std::to_string(o.value) + ")";
    case Observation::Kind::LoadAddr: return "load@" + std::to_string(o.value);
    case Observation::Kind::StoreAddr: return "store@" + std::to_string(o.value);
    case Observation::Kind::Silent: return "eps";
  }
  return "?";
}

namespace {

// Shared body of standard and patched stepping; `delta` is null for standard.
ArchStep do_step(const Program& p, const SecretPartition& part, ArchConfig& c,
                 DeclassTrace* delta) {
  ArchStep out;
  Word pc = c.reg[kPcReg].value;
  const Instruction* ins = p.at(pc);
  if (!ins) {
    out.status = StepStatus::Halted;
    return out;
  }
  switch (ins->kind) {
    case Instruction::Kind::Beqz: {
      LabeledValue cond = c.eval(ins->e1);
      Word next = cond.value == 0 ? ins->target : pc + 1;
      c.reg[kPcReg] = LabeledValue{next, SecLevel::L};
      out.obs = {Observation::Kind::Branch, cond.value == 0 ? Word{1} : Word{0}};
      return out;
    }
    case Instruction::Kind::Jmp: {
      LabeledValue tgt = c.eval(ins->e1);
      c.reg[kPcReg] = LabeledValue{tgt.value, SecLevel::L};
      out.obs = {Observation::Kind::Jump, tgt.value};
      return out;
    }
    case Instruction::Kind::Mov: {
      LabeledValue v = c.eval(ins->e1);
      c.reg[ins->dst] = v;
      c.reg[kPcReg] = LabeledValue{pc + 1, SecLevel::L};
      out.obs = {Observation::Kind::Silent, 0};
      return out;
    }
    case Instruction::Kind::Load: {
      LabeledValue a = c.eval(ins->e1);
      c.reg[ins->dst] = LabeledValue{c.mem.load(a.value), part.memsec(a.value)};
      c.reg[kPcReg] = LabeledValue{pc + 1, SecLevel::L};
      out.obs = {Observation::Kind::LoadAddr, a.value};
      return out;
    }
    case Instruction::Kind::Store: {
      LabeledValue a = c.eval(ins->e1);
      Word v = c.eval(ins->e2).value;
      if (part.memsec(a.value) == SecLevel::L) {
        if (delta) {
          if (delta->empty()) {
            out.status = StepStatus::DeclassUnderflow;
            return out;
          }
          v = delta->front();
          delta->pop_front();
        } else {
          out.declassified = true;
          out.decl_value = v;
        }
      }
      c.mem.store(a.value, v);
      c.reg[kPcReg] = LabeledValue{pc + 1, SecLevel::L};
      out.obs = {Observation::Kind::StoreAddr, a.value};
      return out;
    }
  }
  return out;
}

} // namespace

ArchStep arch_step(const Program& p, const SecretPartition& part, ArchConfig& c) {
  return do_step(p, part, c, nullptr);
}

ArchStep arch_step_patched(const Program& p, const SecretPartition& part, ArchConfig& c,
                           DeclassTrace& delta) {
  return do_step(p, part, c, &delta);
}

ArchRun arch_run(const Program& p, const SecretPartition& part, ArchConfig c0, std::size_t n) {
  ArchRun run;
  run.config = std::move(c0);
  for (std::size_t i = 0; i < n; ++i) {
    ArchStep s = arch_step(p, part, run.config);
    if (s.status == StepStatus::Halted) {
      run.status = StepStatus::Halted;
      break;
    }
    run.obs.push_back(s.obs);
    if (s.declassified) run.decl.push_back(s.decl_value);
    ++run.steps_taken;
  }
  return run;
}

ArchRun arch_run_patched(const Program& p, const SecretPartition& part, ArchConfig c0,
                         DeclassTrace delta, std::size_t n) {
  ArchRun run;
  run.config = std::move(c0);
  run.decl = std::move(delta);
  for (std::size_t i = 0; i < n; ++i) {
    ArchStep s = arch_step_patched(p, part, run.config, run.decl);
    if (s.status == StepStatus::Halted) {
      run.status = StepStatus::Halted;
      break;
    }
    if (s.status == StepStatus::DeclassUnderflow) {
      run.status = StepStatus::DeclassUnderflow;
      break;
    }
    run.obs.push_back(s.obs);
    ++run.steps_taken;
  }
  return run;
}

ArchConfig apply_secrets(const ArchConfig& base, const std::vector<SecretSite>& sites,
                         const std::vector<Word>& values) {
  ArchConfig c = base;
  for (std::size_t i = 0; i < sites.size(); ++i) {
    const SecretSite& s = sites[i];
    if (s.kind == SecretSite::Kind::MemCell)
      c.mem.store(s.addr, values[i]);
    else
      c.reg[s.reg] = LabeledValue{values[i], SecLevel::H};
  }
  return c;
}

void for_each_secret_pair(const CtCheckSpec& spec,
                          const std::function<bool(const std::vector<Word>&,
                                                   const std::vector<Word>&)>& fn) {
  const auto& sites = spec.sites;
  // One "assignment" picks a value per site; a pair is two assignments.
  std::uint64_t total_assignments = 1;
  bool overflow = false;
  for (const auto& s : sites) {
    if (s.domain.empty()) return;
    total_assignments *= s.domain.size();
    if (total_assignments > 4096) {
      overflow = true;
      break;
    }
  }
  if (sites.empty()) {
    std::vector<Word> empty;
    fn(empty, empty);
    return;
  }

  if (!overflow && total_assignments * total_assignments <= 4096) {
    // exhaustive product of assignment pairs
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
      for (const auto& b : all)
        if (!fn(a, b)) return;
    return;
  }

  SplitMix64 rng(spec.seed);
  for (std::size_t k = 0; k < spec.sample_budget; ++k) {
    std::vector<Word> a(sites.size()), b(sites.size());
    for (std::size_t i = 0; i < sites.size(); ++i) {
      a[i] = sites[i].domain[rng.below(sites[i].domain.size())];
      b[i] = sites[i].domain[rng.below(sites[i].domain.size())];
    }
    if (!fn(a, b)) return;
  }
}

Verdict check_constant_time(const CtCheckSpec& spec) {
  Verdict v;
  v.steps = spec.steps;
  for_each_secret_pair(spec, [&](const std::vector<Word>& sa, const std::vector<Word>& sb) {
    ArchConfig ca = apply_secrets(spec.base, spec.sites, sa);
    ArchConfig cb = apply_secrets(spec.base, spec.sites, sb);
    ArchRun ra = arch_run(*spec.program, spec.partition, std::move(ca), spec.steps);
    ArchRun rb = arch_run(*spec.program, spec.partition, std::move(cb), spec.steps);
    ++v.pairs_checked;
    std::size_t m = std::min(ra.obs.size(), rb.obs.size());
    for (std::size_t i = 0; i < m; ++i) {
      if (!(ra.obs[i] == rb.obs[i])) {
        v.pass = false;
        v.counterexample = CtCounterexample{sa, sb, i,
                                            observation_str(ra.obs[i]) + " vs " +
                                                observation_str(rb.obs[i])};
        return false;
      }
    }
    if (ra.obs.size() != rb.obs.size()) {
      v.pass = false;
      v.counterexample = CtCounterexample{sa, sb, m, "observation traces differ in length"};
      return false;
    }
    if (ra.decl != rb.decl) {
      v.pass = false;
      v.counterexample = CtCounterexample{sa, sb, ra.steps_taken,
                                          "declassification traces differ"};
      return false;
    }
    return true;
  });
  return v;
}

Verdict check_ct_up_to_decl(const CtCheckSpec& spec) {
  Verdict v;
  v.steps = spec.steps;
  for_each_secret_pair(spec, [&](const std::vector<Word>& sa, const std::vector<Word>& sb) {
    ArchConfig ca = apply_secrets(spec.base, spec.sites, sa);
    ArchConfig cb = apply_secrets(spec.base, spec.sites, sb);
    ArchRun ra = arch_run(*spec.program, spec.partition, std::move(ca), spec.steps);
    ArchRun rb = arch_run_patched(*spec.program, spec.partition, std::move(cb), ra.decl,
                                  spec.steps);
    ++v.pairs_checked;
    if (rb.status == StepStatus::DeclassUnderflow) {
      v.pass = false;
      v.counterexample = CtCounterexample{sa, sb, rb.steps_taken, "declassification underflow"};
      return false;
    }
    std::size_t m = std::min(ra.obs.size(), rb.obs.size());
    for (std::size_t i = 0; i < m; ++i) {
      if (!(ra.obs[i] == rb.obs[i])) {
        v.pass = false;
        v.counterexample = CtCounterexample{sa, sb, i,
                                            observation_str(ra.obs[i]) + " vs " +
                                                observation_str(rb.obs[i])};
        return false;
      }
    }
    if (ra.obs.size() != rb.obs.size()) {
      v.pass = false;
      v.counterexample = CtCounterexample{sa, sb, m, "observation traces differ in length"};
      return false;
    }
    if (!rb.decl.empty()) {
      v.pass = false;
      v.counterexample = CtCounterexample{sa, sb, rb.steps_taken,
                                          "residual declassification trace not consumed"};
      return false;
    }
    return true;
  });
  return v;
}

} // namespace uspec
