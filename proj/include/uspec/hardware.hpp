#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "uspec/arch.hpp"
#include "uspec/isa.hpp"
#include "uspec/microctx.hpp"
#include "uspec/rob.hpp"

namespace uspec {

// Secure: secrets are sanitized out of speculative execution and resolved
// predictions of secret memory always roll back.
// Insecure: the baseline weakening used as falsification target: no
// sanitization (apl everywhere), loads may commit secret memory on a correct
// prediction, and loads may resolve past pending stores.
enum class Mode : std::uint8_t { Secure, Insecure };

enum class RuleId : std::uint8_t {
  FetchBranchJmp,
  FetchOther,
  BranchCommit,
  BranchRollback,
  JmpCommit,
  JmpRollback,
  ExecuteAssign,
  ExecuteLoadPredict,
  ExecuteLoadCommit,
  ExecuteLoadRollback,
  ExecuteStore,
  RetireAssign,
  RetireStoreLow,
  RetireStoreHigh,
  Stalled,
};

const char* rule_name(RuleId r);

struct HwOptions {
  Mode mode = Mode::Secure;
  std::optional<std::size_t> rob_capacity;
  std::vector<BinOp> vartime_ops; // ops whose operands must be sanitized in execute-assign
  bool monitors = true;
};

struct StepResult {
  Directive directive;
  RuleId rule = RuleId::Stalled;
  StepStatus status = StepStatus::Ok; // DeclassUnderflow aborts a patched run
  std::optional<Word> decl;           // value declassified by retire-store-low
  std::optional<Word> retired_loc;    // program location of a retired instruction entry
  std::vector<Word> leaks;            // rule-level address leaks
  std::optional<Word> predicted;      // value handed out by the predictor
  std::size_t buf_size = 0;           // ROB occupancy after the step
  Word pc = 0;                        // speculative pc after the step
  std::vector<std::string> violations;
};

struct HwRunResult {
  std::vector<StepResult> steps;
  DeclassTrace decl;     // produced by retire-store-low (standard runs)
  DeclassTrace residual; // what is left of the input trace (patched runs)
  StepStatus status = StepStatus::Ok;
  std::size_t violation_count = 0;
};

// One speculative out-of-order machine: committed state, reorder buffer and
// the attacker-controlled microarchitectural context.
class HwSim {
 public:
  HwSim(std::shared_ptr<const Program> prog, SecretPartition part, StrategySpec strategy,
        HwOptions opts = {});

  // register/memory initialisation before the first step
  void set_reg(RegId r, LabeledValue v);
  void set_mem(Word a, Word v);

  void seed_patch(DeclassTrace delta); // switches retire-store-low to the patched rule

  StepResult step();
  HwRunResult run(std::size_t n);

  const MemMap& mem() const { return mem_; }
  const std::vector<LabeledValue>& reg() const { return reg_; }
  const ReorderBuffer& rob() const { return rob_; }
  const MicroContext& mc() const { return mc_; }
  const Program& program() const { return *prog_; }
  const SecretPartition& partition() const { return part_; }
  const HwOptions& options() const { return opts_; }
  const DeclassTrace& patch() const { return patch_; }
  ArchConfig committed() const { return ArchConfig{mem_, reg_}; }
  std::size_t steps_done() const { return steps_done_; }
  Word speculative_pc() const; // pc as seen through pending ROB writes

 private:
  void do_fetch(StepResult& res);
  void do_execute(std::size_t index, StepResult& res);
  void do_retire(StepResult& res);
  void resolve_control_flow(std::size_t idx0, StepResult& res);
  void resolve_load(std::size_t idx0, StepResult& res);
  std::vector<MaybeValue> sanitized_prefix(std::size_t idx0) const;
  bool store_in_prefix(std::size_t idx0) const;
  void run_monitors(StepResult& res);
  void leak_addr_checked(LabeledValue addr, bool speculative, StepResult& res);
  std::shared_ptr<const std::string> mem_canon();

  std::shared_ptr<const Program> prog_;
  SecretPartition part_;
  HwOptions opts_;
  MemMap mem_;
  std::vector<LabeledValue> reg_;
  ReorderBuffer rob_;
  MicroContext mc_;
  bool patched_ = false;
  DeclassTrace patch_;
  std::size_t steps_done_ = 0;
  std::shared_ptr<const std::string> mem_canon_;
};

} // namespace uspec
