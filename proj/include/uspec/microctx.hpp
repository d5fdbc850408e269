#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "uspec/isa.hpp"

namespace uspec {

struct Directive {
  enum class Kind : std::uint8_t { Fetch, Execute, Retire };
  Kind kind = Kind::Fetch;
  std::size_t index = 0; // Execute only, 1-based ROB position

  friend bool operator==(const Directive&, const Directive&) = default;
};

std::string directive_str(const Directive& d);
std::optional<Directive> parse_directive(const std::string& s);

struct PredictQuery {
  enum class Kind : std::uint8_t { BranchTarget, JumpTarget, LoadValue };
  Kind kind = Kind::LoadValue;
  Word loc = 0;           // location of the instruction being predicted
  Word branch_target = 0; // Beqz only
};

struct ScriptStep {
  std::optional<Directive> next;
  std::optional<Word> predict;
};

struct StrategySpec {
  enum class Kind : std::uint8_t { RoundRobin, SeededRandom, Scripted, AlwaysTaken, ConstantValue };
  Kind kind = Kind::RoundRobin;
  std::uint64_t seed = 0; // SeededRandom
  Word constant_value = 0; // ConstantValue
  std::vector<ScriptStep> script;
  std::string name; // label used in reports

  static StrategySpec round_robin() { return {}; }
  static StrategySpec seeded(std::uint64_t seed);
  static StrategySpec always_taken();
  static StrategySpec constant(Word v);
  static StrategySpec scripted(std::vector<ScriptStep> steps, std::string name);

  bool same_as(const StrategySpec& o) const;
  std::string describe() const;
};

// Everything the semantics discloses in one step-rule preamble. The canonical
// byte strings are the ground truth for equality; the view fields exist so
// strategies can schedule without reparsing them (they carry no information
// beyond the public projections).
struct PreambleView {
  std::size_t buf_size = 0;
};

struct MicroEvent {
  enum class Kind : std::uint8_t { Preamble, LeakAddr, LeakPredTag, LeakPredValue };
  Kind kind = Kind::Preamble;
  Word value = 0;
  std::shared_ptr<const std::string> mem; // Preamble only
  std::string reg, buf;                   // Preamble only

  bool equals(const MicroEvent& o) const;
  std::string describe() const;
};

// Attacker-controlled microarchitectural context: an append-only event log
// plus a deterministic strategy. update/predict/next are pure functions of
// (log, strategy); the incremental log hash is derived state.
class MicroContext {
 public:
  MicroContext() = default;
  MicroContext(StrategySpec spec, std::size_t program_size, const SecretPartition& part);

  void update(std::shared_ptr<const std::string> mem_canon, std::string reg_canon,
              std::string buf_canon, PreambleView view);
  void leak_addr(Word a);
  void leak_prediction(Word tag_loc, Word predicted);

  Directive next() const;
  Word predict(const PredictQuery& q) const;

  const std::vector<MicroEvent>& log() const { return log_; }
  const StrategySpec& strategy() const { return spec_; }
  std::size_t steps() const { return preambles_; }

  std::string canonical_bytes() const;

  struct Divergence {
    std::size_t index; // first differing event, or min(size) on length mismatch
    std::string a, b;  // descriptions ("<absent>" when one log is shorter)
  };
  // Logs must be built under matching strategies; callers check same_as first.
  static std::optional<Divergence> diverge(const MicroContext& a, const MicroContext& b);

 private:
  std::uint64_t draw(std::uint64_t salt) const;
  Directive round_robin() const;

  StrategySpec spec_;
  std::vector<MicroEvent> log_;
  std::size_t preambles_ = 0;
  std::size_t last_buf_size_ = 0;
  std::uint64_t log_hash_ = 0x9e3779b97f4a7c15ULL;
  std::size_t program_size_ = 0;
  std::vector<Word> interesting_; // public partition boundary values
};

bool mc_equal(const MicroContext& a, const MicroContext& b);

} // namespace uspec
