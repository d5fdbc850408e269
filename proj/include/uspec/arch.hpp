#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "uspec/isa.hpp"

namespace uspec {

// Sequential machine state. Registers are always defined; taint is carried
// along but the sequential rules never branch on it.
struct ArchConfig {
  MemMap mem;
  std::vector<LabeledValue> reg; // indexed by RegId, [0] == pc

  LabeledValue eval(const Expr& e) const;
  friend bool operator==(const ArchConfig&, const ArchConfig&) = default;
};

struct Observation {
  enum class Kind : std::uint8_t { Branch, Jump, LoadAddr, StoreAddr, Silent };
  Kind kind = Kind::Silent;
  Word value = 0; // Branch: 1 if taken (condition == 0)

  friend bool operator==(const Observation&, const Observation&) = default;
};

std::string observation_str(const Observation& o);

using DeclassTrace = std::deque<Word>;

enum class StepStatus : std::uint8_t { Ok, Halted, DeclassUnderflow };

struct ArchStep {
  StepStatus status = StepStatus::Ok;
  Observation obs;
  bool declassified = false;
  Word decl_value = 0;
};

// One small step; Halted when p[pc] is undefined (normal program end).
ArchStep arch_step(const Program& p, const SecretPartition& part, ArchConfig& c);

// Patched variant: a store to L memory writes the head of delta instead of
// the computed value and consumes it.
ArchStep arch_step_patched(const Program& p, const SecretPartition& part, ArchConfig& c,
                           DeclassTrace& delta);

struct ArchRun {
  ArchConfig config;
  std::vector<Observation> obs;
  DeclassTrace decl;          // produced (standard) / residual (patched)
  StepStatus status = StepStatus::Ok;
  std::size_t steps_taken = 0;
};

ArchRun arch_run(const Program& p, const SecretPartition& part, ArchConfig c0, std::size_t n);
ArchRun arch_run_patched(const Program& p, const SecretPartition& part, ArchConfig c0,
                         DeclassTrace delta, std::size_t n);

// ---------------------------------------------------------------------------
// Dynamic constant-time checking over sampled low-equivalent pairs.

// Where the secret may live and which values it ranges over.
struct SecretSite {
  enum class Kind : std::uint8_t { MemCell, Register };
  Kind kind;
  Word addr = 0;  // MemCell
  RegId reg = 0;  // Register
  std::vector<Word> domain;
};

struct CtCheckSpec {
  const Program* program = nullptr;
  SecretPartition partition;
  ArchConfig base;               // L state shared by every generated pair
  std::vector<SecretSite> sites; // H sites with their value domains
  std::size_t steps = 256;
  std::size_t sample_budget = 256; // pair samples when the product is too big
  std::uint64_t seed = 0;
};

struct CtCounterexample {
  std::vector<Word> secrets_a, secrets_b; // values per site
  std::size_t step = 0;
  std::string detail;
};

struct Verdict {
  bool pass = true;
  bool precondition_failed = false;
  std::size_t pairs_checked = 0;
  std::size_t steps = 0;
  std::optional<CtCounterexample> counterexample;
  std::string note;
};

// Exhaustive when the pair space is <= 4096, otherwise seeded sampling.
// Enumerates assignments of secret values and checks observation-trace and
// declassification-trace equality of every low-equivalent pair.
Verdict check_constant_time(const CtCheckSpec& spec);

// Same pair generation; second run executes the patched semantics seeded with
// the first run's declassification trace, which must be fully consumed.
Verdict check_ct_up_to_decl(const CtCheckSpec& spec);

// Applies a function to each sampled pair of secret assignments.
// Returns false from the callback to stop. Used by the checkers and tests.
void for_each_secret_pair(const CtCheckSpec& spec,
                          const std::function<bool(const std::vector<Word>&,
                                                   const std::vector<Word>&)>& fn);

ArchConfig apply_secrets(const ArchConfig& base, const std::vector<SecretSite>& sites,
                         const std::vector<Word>& values);

} // namespace uspec
