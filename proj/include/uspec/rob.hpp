#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uspec/arch.hpp"
#include "uspec/isa.hpp"

namespace uspec {

// Prediction tag: location of the instruction the prediction came from,
// or empty for resolved / non-speculative entries.
using Tag = std::optional<Word>;

struct RobEntry {
  enum class Kind : std::uint8_t { Mov, Load, Store };
  Kind kind = Kind::Mov;
  RegId dst = 0;  // Mov / Load target; Mov may target pc
  Expr e1;        // Mov value / Load address / Store address
  Expr e2;        // Store value
  Tag tag;
  bool pc_incr = false; // fetch-inserted pc increment, distinct from control-flow pc writes
  Word loc = 0;         // fetch location; trace metadata only, not semantics

  bool resolved() const {
    switch (kind) {
      case Kind::Mov: return e1.is_value();
      case Kind::Load: return false;
      case Kind::Store: return e1.is_value() && e2.is_value();
    }
    return false;
  }
};

using ReorderBuffer = std::vector<RobEntry>;

// --------------------------------------------------------------------------
// Low projections: H values become undefined, structure and tags survive.

MaybeValue low_proj_value(const MaybeValue& v);
Expr low_proj_expr(const Expr& e);
RobEntry low_proj_entry(const RobEntry& e);
ReorderBuffer low_proj_buf(const ReorderBuffer& buf);

// Register map with H entries projected out.
std::vector<MaybeValue> low_proj_reg(std::span<const LabeledValue> reg);

// Total function view of the low memory projection: H cells are undefined.
MaybeValue low_proj_mem(const MemMap& mem, const SecretPartition& part, Word addr);

// --------------------------------------------------------------------------
// apl / aplsan: pending ROB effects over the committed register map.

std::vector<MaybeValue> apl(std::span<const RobEntry> buf, std::span<const LabeledValue> reg);

bool buf_has_tag(std::span<const RobEntry> buf);

// apl when nothing in buf is predicted; low-projected apl otherwise.
std::vector<MaybeValue> aplsan(std::span<const RobEntry> buf, std::span<const LabeledValue> reg);

// --------------------------------------------------------------------------
// Deep update: resolve every pending entry to its architecturally correct
// effect. Predicted entries are re-resolved from the program.

struct DeepUpdateResult {
  ArchConfig config;
  StepStatus status = StepStatus::Ok; // DeclassUnderflow only in the patched variant
};

DeepUpdateResult deep_update(const Program& p, const SecretPartition& part, ArchConfig a,
                             std::span<const RobEntry> buf);
DeepUpdateResult deep_update_patched(const Program& p, const SecretPartition& part, ArchConfig a,
                                     std::span<const RobEntry> buf, DeclassTrace& delta);

// --------------------------------------------------------------------------
// Transient predicate and well-formedness (runtime monitors).

bool goodpred(const Program& p, const SecretPartition& part, const RobEntry& e,
              const ArchConfig& resolved);

// true iff some prefix-resolved entry fails goodpred.
bool is_transient(const Program& p, const SecretPartition& part, const ArchConfig& committed,
                  std::span<const RobEntry> buf);

struct WfReport {
  bool ok = true;
  std::string diagnosis;
};

WfReport check_wellformed(const Program& p, const SecretPartition& part,
                          const ArchConfig& committed, std::span<const RobEntry> buf);

// --------------------------------------------------------------------------
// Canonical serialization (byte-stable; used for microcontext equality).

void canon_value(const MaybeValue& v, std::string& out);
void canon_expr(const Expr& e, std::string& out);
void canon_entry(const RobEntry& e, std::string& out);
std::string canon_buf(std::span<const RobEntry> buf);
std::string canon_reg(std::span<const MaybeValue> reg);
std::string canon_mem_low(const MemMap& mem, const SecretPartition& part);

} // namespace uspec
