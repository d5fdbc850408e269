#include "uspec/hardware.hpp"

#include <algorithm>

namespace uspec {

const char* rule_name(RuleId r) {
  switch (r) {
    case RuleId::FetchBranchJmp: return "fetch-predict-branch-jmp";
    case RuleId::FetchOther: return "fetch-others";
    case RuleId::BranchCommit: return "branch-commit";
    case RuleId::BranchRollback: return "branch-rollback";
    case RuleId::JmpCommit: return "jmp-commit";
    case RuleId::JmpRollback: return "jmp-rollback";
    case RuleId::ExecuteAssign: return "execute-assign";
    case RuleId::ExecuteLoadPredict: return "execute-load-predict";
    case RuleId::ExecuteLoadCommit: return "execute-load-commit";
    case RuleId::ExecuteLoadRollback: return "execute-load-rollback";
    case RuleId::ExecuteStore: return "execute-store";
    case RuleId::RetireAssign: return "retire-assign";
    case RuleId::RetireStoreLow: return "retire-store-low";
    case RuleId::RetireStoreHigh: return "retire-store-high";
    case RuleId::Stalled: return "stalled";
  }
  return "?";
}

HwSim::HwSim(std::shared_ptr<const Program> prog, SecretPartition part, StrategySpec strategy,
             HwOptions opts)
    : prog_(std::move(prog)),
      part_(std::move(part)),
      opts_(std::move(opts)),
      mc_(std::move(strategy), prog_->size(), part_) {
  reg_.assign(prog_->reg_count(), LabeledValue{0, SecLevel::L});
  reg_[kPcReg] = LabeledValue{prog_->entrypoint, SecLevel::L};
}

void HwSim::set_reg(RegId r, LabeledValue v) { reg_[r] = v; }

void HwSim::set_mem(Word a, Word v) {
  mem_.store(a, v);
  mem_canon_.reset();
}

void HwSim::seed_patch(DeclassTrace delta) {
  patched_ = true;
  patch_ = std::move(delta);
}

std::shared_ptr<const std::string> HwSim::mem_canon() {
  if (!mem_canon_) mem_canon_ = std::make_shared<const std::string>(canon_mem_low(mem_, part_));
  return mem_canon_;
}

std::vector<MaybeValue> HwSim::sanitized_prefix(std::size_t idx0) const {
  std::span<const RobEntry> prefix(rob_.data(), idx0);
  if (opts_.mode == Mode::Insecure) return apl(prefix, reg_);
  return aplsan(prefix, reg_);
}

bool HwSim::store_in_prefix(std::size_t idx0) const {
  for (std::size_t i = 0; i < idx0; ++i)
    if (rob_[i].kind == RobEntry::Kind::Store) return true;
  return false;
}

void HwSim::leak_addr_checked(LabeledValue addr, bool speculative, StepResult& res) {
  // under speculation the sanitized map cannot hand out secrets, so an
  // H-labeled rule-level leak here is an implementation bug
  if (opts_.mode == Mode::Secure && speculative && addr.level == SecLevel::H)
    res.violations.push_back("rule-level leak of an H-labeled value under speculation");
  res.leaks.push_back(addr.value);
  mc_.leak_addr(addr.value);
}

Word HwSim::speculative_pc() const {
  // pc writes in the buffer are always resolved, so the youngest one wins
  for (auto it = rob_.rbegin(); it != rob_.rend(); ++it)
    if (it->kind == RobEntry::Kind::Mov && it->dst == kPcReg && it->e1.is_value())
      return it->e1.lit().value;
  return reg_[kPcReg].value;
}

StepResult HwSim::step() {
  mc_.update(mem_canon(), canon_reg(low_proj_reg(reg_)), canon_buf(rob_),
             PreambleView{rob_.size()});
  Directive d = mc_.next();

  StepResult res;
  res.directive = d;
  switch (d.kind) {
    case Directive::Kind::Fetch: do_fetch(res); break;
    case Directive::Kind::Execute: do_execute(d.index, res); break;
    case Directive::Kind::Retire: do_retire(res); break;
  }
  if (opts_.monitors && res.status == StepStatus::Ok) run_monitors(res);
  res.buf_size = rob_.size();
  res.pc = speculative_pc();
  ++steps_done_;
  return res;
}

void HwSim::do_fetch(StepResult& res) {
  std::vector<MaybeValue> regs = apl(rob_, reg_);
  MaybeValue pcv = regs[kPcReg];
  if (!pcv) return; // pc writes are always resolved; defensive stall
  Word loc = pcv->value;
  const Instruction* ins = prog_->at(loc);
  if (!ins) return; // fetching past the program stalls

  bool cf = ins->kind == Instruction::Kind::Beqz || ins->kind == Instruction::Kind::Jmp;
  if (opts_.rob_capacity && rob_.size() + (cf ? 1 : 2) > *opts_.rob_capacity) return;

  if (cf) {
    PredictQuery q;
    q.kind = ins->kind == Instruction::Kind::Beqz ? PredictQuery::Kind::BranchTarget
                                                  : PredictQuery::Kind::JumpTarget;
    q.loc = loc;
    q.branch_target = ins->target;
    Word predicted = mc_.predict(q);

    RobEntry e;
    e.kind = RobEntry::Kind::Mov;
    e.dst = kPcReg;
    e.e1 = Expr::lit(LabeledValue{predicted, SecLevel::L});
    e.tag = loc;
    e.loc = loc;
    rob_.push_back(std::move(e));
    mc_.leak_prediction(loc, predicted);
    res.predicted = predicted;
    res.rule = RuleId::FetchBranchJmp;
    return;
  }

  RobEntry e;
  e.loc = loc;
  switch (ins->kind) {
    case Instruction::Kind::Mov:
      e.kind = RobEntry::Kind::Mov;
      e.dst = ins->dst;
      e.e1 = ins->e1;
      break;
    case Instruction::Kind::Load:
      e.kind = RobEntry::Kind::Load;
      e.dst = ins->dst;
      e.e1 = ins->e1;
      break;
    case Instruction::Kind::Store:
      e.kind = RobEntry::Kind::Store;
      e.e1 = ins->e1;
      e.e2 = ins->e2;
      break;
    default: return;
  }
  rob_.push_back(std::move(e));

  RobEntry incr;
  incr.kind = RobEntry::Kind::Mov;
  incr.dst = kPcReg;
  incr.e1 = Expr::lit(LabeledValue{loc + 1, SecLevel::L});
  incr.pc_incr = true;
  incr.loc = loc;
  rob_.push_back(std::move(incr));
  res.rule = RuleId::FetchOther;
}

void HwSim::do_execute(std::size_t index, StepResult& res) {
  if (index < 1 || index > rob_.size()) return;
  std::size_t i = index - 1;
  RobEntry& e = rob_[i];

  switch (e.kind) {
    case RobEntry::Kind::Load: {
      // execute-load-predict: replace the load by a tagged predicted value
      std::vector<MaybeValue> regs = apl(std::span(rob_.data(), i), reg_);
      MaybeValue pcv = regs[kPcReg];
      if (!pcv) return;
      Word l0 = pcv->value;
      PredictQuery q;
      q.kind = PredictQuery::Kind::LoadValue;
      q.loc = l0;
      Word predicted = mc_.predict(q);

      e.kind = RobEntry::Kind::Mov;
      e.e1 = Expr::lit(LabeledValue{predicted, SecLevel::L});
      e.tag = l0;
      mc_.leak_prediction(l0, predicted);
      res.predicted = predicted;
      res.rule = RuleId::ExecuteLoadPredict;
      return;
    }
    case RobEntry::Kind::Mov: {
      if (e.tag) {
        // a resolved prediction waiting for its outcome
        if (!e.e1.is_value()) return;
        if (e.dst == kPcReg)
          resolve_control_flow(i, res);
        else
          resolve_load(i, res);
        return;
      }
      if (e.e1.is_value()) return; // nothing left to execute
      // execute-assign; variable-time operators force the sanitized register map
      bool vartime = false;
      for (BinOp op : opts_.vartime_ops)
        if (e.e1.contains_op(op)) vartime = true;
      std::vector<MaybeValue> regs =
          vartime ? sanitized_prefix(i) : apl(std::span(rob_.data(), i), reg_);
      MaybeValue v = eval_expr(e.e1, regs);
      if (!v) return;
      e.e1 = Expr::lit(*v);
      res.rule = RuleId::ExecuteAssign;
      return;
    }
    case RobEntry::Kind::Store: {
      if (e.resolved()) return;
      // the resolved address lands in the ROB with level L, so it must come
      // from the sanitized map; the value may stay secret
      std::vector<MaybeValue> addr_regs = sanitized_prefix(i);
      MaybeValue a = eval_expr(e.e1, addr_regs);
      if (!a) return;
      std::vector<MaybeValue> val_regs = apl(std::span(rob_.data(), i), reg_);
      MaybeValue v = eval_expr(e.e2, val_regs);
      if (!v) return;
      e.e1 = Expr::lit(LabeledValue{a->value, SecLevel::L});
      e.e2 = Expr::lit(*v);
      res.rule = RuleId::ExecuteStore;
      return;
    }
  }
}

void HwSim::resolve_control_flow(std::size_t i, StepResult& res) {
  const RobEntry& e = rob_[i];
  Word l0 = *e.tag;
  const Instruction* ins = prog_->at(l0);
  if (!ins) return;

  std::vector<MaybeValue> regs = sanitized_prefix(i);
  Word actual = 0;
  bool is_branch = false;
  switch (ins->kind) {
    case Instruction::Kind::Beqz: {
      MaybeValue c = eval_expr(ins->e1, regs);
      if (!c) return;
      actual = c->value == 0 ? ins->target : l0 + 1;
      is_branch = true;
      break;
    }
    case Instruction::Kind::Jmp: {
      MaybeValue t = eval_expr(ins->e1, regs);
      if (!t) return;
      actual = t->value;
      break;
    }
    default: return;
  }

  Word predicted = e.e1.lit().value;
  if (predicted == actual) {
    RobEntry& entry = rob_[i];
    entry.e1 = Expr::lit(LabeledValue{actual, SecLevel::L});
    entry.tag.reset();
    res.rule = is_branch ? RuleId::BranchCommit : RuleId::JmpCommit;
  } else {
    RobEntry resolved;
    resolved.kind = RobEntry::Kind::Mov;
    resolved.dst = kPcReg;
    resolved.e1 = Expr::lit(LabeledValue{actual, SecLevel::L});
    resolved.loc = l0;
    rob_.resize(i); // discard the misprediction and everything younger
    rob_.push_back(std::move(resolved));
    res.rule = is_branch ? RuleId::BranchRollback : RuleId::JmpRollback;
  }
}

void HwSim::resolve_load(std::size_t i, StepResult& res) {
  const RobEntry& e = rob_[i];
  Word l0 = *e.tag;
  const Instruction* ins = prog_->at(l0);
  if (!ins || ins->kind != Instruction::Kind::Load) return;

  std::vector<MaybeValue> regs = sanitized_prefix(i);
  MaybeValue a = eval_expr(ins->e1, regs);
  if (!a) return;
  // loads resolve against memory only once no older store is pending;
  // the insecure baseline bypasses pending stores (store-to-load hazard)
  if (opts_.mode == Mode::Secure && store_in_prefix(i)) return;

  Word addr = a->value;
  Word mval = mem_.load(addr);
  SecLevel lvl = part_.memsec(addr);
  Word predicted = e.e1.lit().value;
  bool correct = mval == predicted;
  bool commit = correct && (opts_.mode == Mode::Insecure || lvl == SecLevel::L);

  bool speculative = buf_has_tag(std::span(rob_.data(), i));
  if (commit) {
    RobEntry& entry = rob_[i];
    entry.e1 = Expr::lit(LabeledValue{mval, lvl});
    entry.tag.reset();
    res.rule = RuleId::ExecuteLoadCommit;
  } else {
    // wrong prediction or secret target: drop younger entries, keep the
    // pc increment that belongs to this load
    RobEntry resolved = rob_[i];
    resolved.e1 = Expr::lit(LabeledValue{mval, lvl});
    resolved.tag.reset();
    std::optional<RobEntry> incr;
    if (i + 1 < rob_.size() && rob_[i + 1].pc_incr) incr = rob_[i + 1];
    rob_.resize(i);
    rob_.push_back(std::move(resolved));
    if (incr) rob_.push_back(std::move(*incr));
    res.rule = RuleId::ExecuteLoadRollback;
  }
  leak_addr_checked(*a, speculative, res);
}

void HwSim::do_retire(StepResult& res) {
  if (rob_.empty()) return;
  RobEntry& h = rob_.front();
  if (h.tag || !h.resolved()) return;

  switch (h.kind) {
    case RobEntry::Kind::Load:
      return; // loads resolve to register writes before retiring
    case RobEntry::Kind::Mov: {
      reg_[h.dst] = h.e1.lit();
      if (!h.pc_incr) res.retired_loc = h.loc;
      res.rule = RuleId::RetireAssign;
      rob_.erase(rob_.begin());
      return;
    }
    case RobEntry::Kind::Store: {
      LabeledValue a = h.e1.lit();
      Word v = h.e2.lit().value;
      if (part_.memsec(a.value) == SecLevel::L) {
        if (patched_) {
          if (patch_.empty()) {
            res.status = StepStatus::DeclassUnderflow;
            return;
          }
          v = patch_.front();
          patch_.pop_front();
        } else {
          res.decl = v;
        }
        res.rule = RuleId::RetireStoreLow;
        mem_canon_.reset(); // the low memory projection changed
      } else {
        res.rule = RuleId::RetireStoreHigh;
      }
      mem_.store(a.value, v);
      res.retired_loc = h.loc;
      leak_addr_checked(a, false, res); // the head of the buffer is never speculative
      rob_.erase(rob_.begin());
      return;
    }
  }
}

void HwSim::run_monitors(StepResult& res) {
  // pc is L everywhere
  if (reg_[kPcReg].level != SecLevel::L) res.violations.push_back("pc-low: committed pc is H");
  for (const auto& e : rob_) {
    if (e.kind == RobEntry::Kind::Mov && e.dst == kPcReg) {
      if (!e.e1.is_value() || e.e1.lit().level != SecLevel::L) {
        res.violations.push_back("pc-low: unresolved or H pc write in the reorder buffer");
        break;
      }
    }
  }

  ArchConfig committed_cfg{mem_, reg_};
  WfReport wf = check_wellformed(*prog_, part_, committed_cfg, rob_);
  if (!wf.ok) res.violations.push_back("wf: " + wf.diagnosis);

  if (buf_has_tag(rob_)) {
    std::vector<MaybeValue> san = aplsan(rob_, reg_);
    for (const auto& v : san)
      if (v && v->level == SecLevel::H) {
        res.violations.push_back("aplsan: H value survived sanitization under speculation");
        break;
      }
  }

  if (!is_transient(*prog_, part_, committed_cfg, rob_)) {
    std::vector<MaybeValue> shallow = apl(rob_, reg_);
    ArchConfig deep = deep_update(*prog_, part_, committed_cfg, rob_).config;
    for (std::size_t r = 0; r < shallow.size(); ++r) {
      if (shallow[r] && !(deep.reg[r] == *shallow[r])) {
        res.violations.push_back("apl/deep-update disagree on register " +
                                 prog_->reg_names[r]);
        break;
      }
    }
  }
}

HwRunResult HwSim::run(std::size_t n) {
  HwRunResult out;
  out.steps.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    StepResult s = step();
    if (s.decl) out.decl.push_back(*s.decl);
    out.violation_count += s.violations.size();
    out.steps.push_back(std::move(s));
    if (out.steps.back().status != StepStatus::Ok) {
      out.status = out.steps.back().status;
      break;
    }
  }
  if (patched_) out.residual = patch_;
  return out;
}

} // namespace uspec
