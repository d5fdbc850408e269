#pragma once

#include <string>
#include <vector>

#include "uspec/arch.hpp"
#include "uspec/hardware.hpp"
#include "uspec/isa.hpp"
#include "uspec/rng.hpp"

namespace uspec::testutil {

inline LabeledValue lv(Word v, SecLevel s = SecLevel::L) { return LabeledValue{v, s}; }

inline ArchConfig fresh_config(const Program& p) {
  ArchConfig c;
  c.reg.assign(p.reg_count(), LabeledValue{0, SecLevel::L});
  c.reg[kPcReg] = LabeledValue{p.entrypoint, SecLevel::L};
  return c;
}

// Random straight-line programs over a small register and address universe:
// movs, loads and stores only, expression depth <= 2.
inline std::string random_straightline_program(SplitMix64& rng, std::size_t len) {
  const std::vector<std::string> regs = {"r0", "r1", "r2", "r3"};
  auto reg = [&] { return regs[rng.below(regs.size())]; };
  auto atom = [&]() -> std::string {
    if (rng.below(2)) return reg();
    return std::to_string(rng.below(32));
  };
  const std::vector<std::string> ops = {"+", "-", "*", "&", "|", "^", "<<", ">>", "==", "<"};
  auto expr = [&]() -> std::string {
    switch (rng.below(3)) {
      case 0: return atom();
      case 1: return "(" + atom() + " " + ops[rng.below(ops.size())] + " " + atom() + ")";
      default:
        return "(" + atom() + " " + ops[rng.below(ops.size())] + " (" + atom() + " " +
               ops[rng.below(ops.size())] + " " + atom() + "))";
    }
  };

  std::string out = ".regs r0, r1, r2, r3\n";
  for (std::size_t i = 0; i < len; ++i) {
    switch (rng.below(4)) {
      case 0:
      case 1: out += reg() + " <- " + expr() + "\n"; break;
      case 2: out += reg() + " <- load (" + atom() + " & 31)\n"; break;
      default: out += "store (" + atom() + " & 31), " + expr() + "\n"; break;
    }
  }
  return out;
}

// Random programs including control flow; branch targets stay within
// [0, len], jumps come from register-derived expressions and may escape.
inline std::string random_program(SplitMix64& rng, std::size_t len) {
  const std::vector<std::string> regs = {"r0", "r1", "r2", "r3"};
  auto reg = [&] { return regs[rng.below(regs.size())]; };
  auto atom = [&]() -> std::string {
    if (rng.below(2)) return reg();
    return std::to_string(rng.below(32));
  };
  std::string out = ".regs r0, r1, r2, r3\n";
  for (std::size_t i = 0; i < len; ++i) {
    switch (rng.below(8)) {
      case 0:
        out += "beqz " + atom() + ", " + std::to_string(rng.below(len + 1)) + "\n";
        break;
      case 1:
        out += "jmp (" + atom() + " & " + std::to_string(len) + ")\n";
        break;
      case 2:
        out += reg() + " <- load (" + atom() + " & 31)\n";
        break;
      case 3:
        out += "store (" + atom() + " & 31), " + atom() + "\n";
        break;
      default:
        out += reg() + " <- (" + atom() + " " +
               std::vector<std::string>{"+", "-", "*", "^"}[rng.below(4)] + " " + atom() + ")\n";
        break;
    }
  }
  return out;
}

// Runs the speculative machine until everything retired and fetch ran dry.
inline HwRunResult run_to_quiescence(HwSim& sim, std::size_t max_steps) {
  HwRunResult out;
  for (std::size_t i = 0; i < max_steps; ++i) {
    StepResult s = sim.step();
    if (s.decl) out.decl.push_back(*s.decl);
    out.violation_count += s.violations.size();
    bool done = sim.rob().empty() && !sim.program().at(sim.reg()[kPcReg].value);
    out.steps.push_back(std::move(s));
    if (out.steps.back().status != StepStatus::Ok) {
      out.status = out.steps.back().status;
      break;
    }
    if (done) break;
  }
  return out;
}

} // namespace uspec::testutil
