#include "uspec/rob.hpp"

namespace uspec {

MaybeValue low_proj_value(const MaybeValue& v) {
  if (!v || v->level == SecLevel::H) return std::nullopt;
  return v;
}

namespace {
// In buffer projections H literals are replaced by a poisoned literal that
// serializes as undefined; registers and operators are kept.
const LabeledValue kUndefMarker{0, SecLevel::H};
} // namespace

Expr low_proj_expr(const Expr& e) {
  switch (e.kind()) {
    case Expr::Kind::Lit:
      if (e.lit().level == SecLevel::H) return Expr::lit(kUndefMarker);
      return e;
    case Expr::Kind::Reg: return e;
    case Expr::Kind::Bin:
      return Expr::bin(e.op(), low_proj_expr(e.lhs()), low_proj_expr(e.rhs()));
  }
  return e;
}

RobEntry low_proj_entry(const RobEntry& e) {
  RobEntry out = e;
  out.e1 = low_proj_expr(e.e1);
  if (e.kind == RobEntry::Kind::Store) out.e2 = low_proj_expr(e.e2);
  return out;
}

ReorderBuffer low_proj_buf(const ReorderBuffer& buf) {
  ReorderBuffer out;
  out.reserve(buf.size());
  for (const auto& e : buf) out.push_back(low_proj_entry(e));
  return out;
}

std::vector<MaybeValue> low_proj_reg(std::span<const LabeledValue> reg) {
  std::vector<MaybeValue> out(reg.size());
  for (std::size_t i = 0; i < reg.size(); ++i)
    out[i] = reg[i].level == SecLevel::H ? MaybeValue{} : MaybeValue{reg[i]};
  return out;
}

MaybeValue low_proj_mem(const MemMap& mem, const SecretPartition& part, Word addr) {
  if (part.memsec(addr) == SecLevel::H) return std::nullopt;
  return LabeledValue{mem.load(addr), SecLevel::L};
}

std::vector<MaybeValue> apl(std::span<const RobEntry> buf, std::span<const LabeledValue> reg) {
  std::vector<MaybeValue> out(reg.begin(), reg.end());
  for (const auto& e : buf) {
    switch (e.kind) {
      case RobEntry::Kind::Mov:
        out[e.dst] = e.e1.is_value() ? MaybeValue{e.e1.lit()} : MaybeValue{};
        break;
      case RobEntry::Kind::Load:
        out[e.dst] = std::nullopt;
        break;
      case RobEntry::Kind::Store:
        break;
    }
  }
  return out;
}

bool buf_has_tag(std::span<const RobEntry> buf) {
  for (const auto& e : buf)
    if (e.tag) return true;
  return false;
}

std::vector<MaybeValue> aplsan(std::span<const RobEntry> buf, std::span<const LabeledValue> reg) {
  std::vector<MaybeValue> out = apl(buf, reg);
  if (buf_has_tag(buf))
    for (auto& v : out) v = low_proj_value(v);
  return out;
}

// ---------------------------------------------------------------------------
// Deep update

namespace {

// Applies one entry to an architectural configuration. Tagged entries are
// re-resolved against the program; `delta` switches stores to the patched rule.
StepStatus deep_apply(const Program& p, const SecretPartition& part, ArchConfig& a,
                      const RobEntry& e, DeclassTrace* delta) {
  switch (e.kind) {
    case RobEntry::Kind::Mov: {
      if (!e.tag) {
        a.reg[e.dst] = a.eval(e.e1);
        return StepStatus::Ok;
      }
      const Instruction* ins = p.at(*e.tag);
      if (!ins) return StepStatus::Ok; // unreachable for well-formed buffers
      if (e.dst == kPcReg) {
        switch (ins->kind) {
          case Instruction::Kind::Jmp:
            a.reg[kPcReg] = LabeledValue{a.eval(ins->e1).value, SecLevel::L};
            break;
          case Instruction::Kind::Beqz: {
            Word c = a.eval(ins->e1).value;
            a.reg[kPcReg] = LabeledValue{c == 0 ? ins->target : *e.tag + 1, SecLevel::L};
            break;
          }
          default: break;
        }
      } else if (ins->kind == Instruction::Kind::Load) {
        Word addr = a.eval(ins->e1).value;
        a.reg[e.dst] = LabeledValue{a.mem.load(addr), part.memsec(addr)};
      }
      return StepStatus::Ok;
    }
    case RobEntry::Kind::Load: {
      Word addr = a.eval(e.e1).value;
      a.reg[e.dst] = LabeledValue{a.mem.load(addr), part.memsec(addr)};
      return StepStatus::Ok;
    }
    case RobEntry::Kind::Store: {
      Word addr = a.eval(e.e1).value;
      Word v = a.eval(e.e2).value;
      if (delta && part.memsec(addr) == SecLevel::L) {
        if (delta->empty()) return StepStatus::DeclassUnderflow;
        v = delta->front();
        delta->pop_front();
      }
      a.mem.store(addr, v);
      return StepStatus::Ok;
    }
  }
  return StepStatus::Ok;
}

} // namespace

DeepUpdateResult deep_update(const Program& p, const SecretPartition& part, ArchConfig a,
                             std::span<const RobEntry> buf) {
  DeepUpdateResult r;
  for (const auto& e : buf) deep_apply(p, part, a, e, nullptr);
  r.config = std::move(a);
  return r;
}

DeepUpdateResult deep_update_patched(const Program& p, const SecretPartition& part, ArchConfig a,
                                     std::span<const RobEntry> buf, DeclassTrace& delta) {
  DeepUpdateResult r;
  for (const auto& e : buf) {
    r.status = deep_apply(p, part, a, e, &delta);
    if (r.status != StepStatus::Ok) break;
  }
  r.config = std::move(a);
  return r;
}

// ---------------------------------------------------------------------------
// goodpred / transient

bool goodpred(const Program& p, const SecretPartition& part, const RobEntry& e,
              const ArchConfig& resolved) {
  if (!e.tag) return true;
  const Instruction* ins = p.at(*e.tag);
  if (!ins || e.kind != RobEntry::Kind::Mov || !e.e1.is_value()) return false;
  Word predicted = e.e1.lit().value;
  switch (ins->kind) {
    case Instruction::Kind::Beqz: {
      Word c = resolved.eval(ins->e1).value;
      return predicted == (c == 0 ? ins->target : *e.tag + 1);
    }
    case Instruction::Kind::Jmp:
      return predicted == resolved.eval(ins->e1).value;
    case Instruction::Kind::Load: {
      Word addr = resolved.eval(ins->e1).value;
      return part.memsec(addr) == SecLevel::L && resolved.mem.load(addr) == predicted;
    }
    default:
      return false;
  }
}

bool is_transient(const Program& p, const SecretPartition& part, const ArchConfig& committed,
                  std::span<const RobEntry> buf) {
  ArchConfig cur = committed;
  for (const auto& e : buf) {
    if (!goodpred(p, part, e, cur)) return true;
    deep_apply(p, part, cur, e, nullptr);
  }
  return false;
}

// ---------------------------------------------------------------------------
// Well-formedness monitor

namespace {

bool is_cf(const Instruction& ins) {
  return ins.kind == Instruction::Kind::Beqz || ins.kind == Instruction::Kind::Jmp;
}

} // namespace

WfReport check_wellformed(const Program& p, const SecretPartition& part,
                          const ArchConfig& committed, std::span<const RobEntry> buf) {
  // The walk follows the speculative fetch path: pc writes advance the
  // cursor with their recorded value (mispredicted suffixes still have to
  // line up with the program along the path they were fetched from).
  Word pc = committed.reg[kPcReg].value;
  auto fail = [&](std::size_t i, const std::string& why) {
    return WfReport{false, "entry " + std::to_string(i + 1) + ": " + why};
  };

  for (std::size_t i = 0; i < buf.size(); ++i) {
    const RobEntry& e = buf[i];
    const Instruction* ins = p.at(pc);

    if (e.kind == RobEntry::Kind::Mov && e.dst == kPcReg) {
      if (!e.e1.is_value()) return fail(i, "pc assignment unresolved");
      if (e.e1.lit().level != SecLevel::L) return fail(i, "pc level must be L");
      if (e.pc_incr) {
        // lone increments (their instruction already retired) sit at the head
        if (i != 0) return fail(i, "stray pc increment");
        if (e.e1.lit().value != pc + 1) return fail(i, "pc increment skips a location");
      } else if (e.tag) {
        if (*e.tag != pc) return fail(i, "prediction tag does not match current location");
        if (!ins || !is_cf(*ins)) return fail(i, "tagged pc write without branch or jump");
      } else {
        if (!ins || !is_cf(*ins)) return fail(i, "pc write without branch or jump");
      }
      pc = e.e1.lit().value;
      continue;
    }

    // instruction entry followed by its pc increment
    if (!ins) return fail(i, "no instruction at speculative location " + std::to_string(pc));
    switch (e.kind) {
      case RobEntry::Kind::Mov:
        if (e.tag) {
          if (*e.tag != pc) return fail(i, "prediction tag does not match current location");
          if (ins->kind != Instruction::Kind::Load || ins->dst != e.dst)
            return fail(i, "tagged register write without matching load");
          if (!e.e1.is_value() || e.e1.lit().level != SecLevel::L)
            return fail(i, "predicted value must be a resolved L value");
        } else {
          bool matches_mov = ins->kind == Instruction::Kind::Mov && ins->dst == e.dst;
          bool matches_load = ins->kind == Instruction::Kind::Load && ins->dst == e.dst;
          if (!matches_mov && !matches_load)
            return fail(i, "register write does not match program instruction");
        }
        break;
      case RobEntry::Kind::Load:
        if (ins->kind != Instruction::Kind::Load || ins->dst != e.dst)
          return fail(i, "load entry does not match program instruction");
        break;
      case RobEntry::Kind::Store:
        if (ins->kind != Instruction::Kind::Store)
          return fail(i, "store entry does not match program instruction");
        if (e.e1.is_value() && e.e1.lit().level != SecLevel::L)
          return fail(i, "resolved store address must be L");
        if (e.tag) return fail(i, "store entries carry no prediction tag");
        break;
    }

    if (i + 1 >= buf.size() || !buf[i + 1].pc_incr)
      return fail(i, "instruction entry without pc increment");
    const RobEntry& incr = buf[i + 1];
    if (!incr.e1.is_value()) return fail(i + 1, "pc increment unresolved");
    if (incr.e1.lit().level != SecLevel::L) return fail(i + 1, "pc level must be L");
    if (incr.e1.lit().value != pc + 1)
      return fail(i + 1, "pc increment does not point to the next location");
    pc = incr.e1.lit().value;
    ++i;
  }
  (void)part;
  return WfReport{};
}

// ---------------------------------------------------------------------------
// Canonical serialization

void canon_value(const MaybeValue& v, std::string& out) {
  if (!v) {
    out += 'U';
    return;
  }
  out += std::to_string(v->value);
  out += v->level == SecLevel::H ? 'H' : 'L';
}

void canon_expr(const Expr& e, std::string& out) {
  switch (e.kind()) {
    case Expr::Kind::Lit:
      if (e.lit().level == SecLevel::H) {
        out += 'U'; // projected-out secret
      } else {
        out += std::to_string(e.lit().value);
        out += 'L';
      }
      return;
    case Expr::Kind::Reg:
      out += 'r';
      out += std::to_string(e.reg());
      return;
    case Expr::Kind::Bin:
      out += '(';
      out += binop_name(e.op());
      out += ' ';
      canon_expr(e.lhs(), out);
      out += ' ';
      canon_expr(e.rhs(), out);
      out += ')';
      return;
  }
}

void canon_entry(const RobEntry& e, std::string& out) {
  switch (e.kind) {
    case RobEntry::Kind::Mov:
      out += e.pc_incr ? "m+" : "m";
      out += std::to_string(e.dst);
      out += '=';
      canon_expr(e.e1, out);
      break;
    case RobEntry::Kind::Load:
      out += "ld";
      out += std::to_string(e.dst);
      out += '=';
      canon_expr(e.e1, out);
      break;
    case RobEntry::Kind::Store:
      out += "st";
      canon_expr(e.e1, out);
      out += ',';
      canon_expr(e.e2, out);
      break;
  }
  out += '@';
  out += e.tag ? std::to_string(*e.tag) : "e";
  out += ';';
}

std::string canon_buf(std::span<const RobEntry> buf) {
  // canon_expr already writes H literals as undefined, so this serializes
  // the low projection of the buffer
  std::string out;
  out.reserve(buf.size() * 24 + 2);
  out += "B[";
  for (const auto& e : buf) canon_entry(e, out);
  out += ']';
  return out;
}

std::string canon_reg(std::span<const MaybeValue> reg) {
  std::string out;
  out.reserve(reg.size() * 8 + 2);
  out += "R[";
  for (const auto& v : reg) {
    canon_value(v, out);
    out += ';';
  }
  out += ']';
  return out;
}

std::string canon_mem_low(const MemMap& mem, const SecretPartition& part) {
  std::string out;
  out += "X[";
  for (const auto& [lo, hi] : part.ranges) {
    out += std::to_string(lo);
    out += '-';
    out += std::to_string(hi);
    out += ';';
  }
  out += "]M[";
  for (const auto& [a, v] : mem.cells) {
    if (v == 0) continue; // canonical: default cells stay implicit
    if (part.memsec(a) == SecLevel::H) continue;
    out += std::to_string(a);
    out += ':';
    out += std::to_string(v);
    out += ';';
  }
  out += ']';
  return out;
}

} // namespace uspec
