#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "uspec/arch.hpp"
#include "uspec/corpus.hpp"
#include "uspec/hardware.hpp"
#include "uspec/microctx.hpp"

namespace uspec {

// A differential experiment over one program: strategy cells x secret pairs.
struct ExperimentSpec {
  std::shared_ptr<const Program> program;
  SecretPartition partition;
  ArchConfig base;
  std::vector<SecretSite> sites;
  std::optional<StrategySpec> script; // prepended strategy cell (gadget attack script)
  std::size_t steps = 500;
  std::size_t seeds = 100; // SeededRandom strategies 0..seeds-1
  std::size_t pairs = 20;
  Mode mode = Mode::Secure;
  std::uint64_t seed = 0; // master seed for pair generation and strategy seeding
  bool monitors = true;
  std::size_t jobs = 1;

  static ExperimentSpec for_gadget(const Gadget& g);
};

struct Witness {
  std::size_t cell = 0;
  StrategySpec strategy;
  std::vector<Word> secrets_a, secrets_b;
  std::size_t event_index = 0;
  std::size_t step = 0; // number of completed steps at the divergence
  std::string event_a, event_b;
};

struct SecVerdict {
  enum class Status : std::uint8_t { Pass, Fail, PreconditionViolation };
  Status status = Status::Pass;
  std::optional<Witness> witness;
  std::size_t cells_checked = 0;
  std::size_t vacuous_cells = 0; // classical check only
  std::size_t violation_count = 0;
  std::string note;

  bool pass() const { return status == Status::Pass; }
};

// Low-equivalent initial pair: identical on L state, secrets drawn
// independently per site.
std::pair<HwSim, HwSim> gen_low_equiv_pair(const ExperimentSpec& spec,
                                           const StrategySpec& strategy,
                                           const std::vector<Word>& secrets_a,
                                           const std::vector<Word>& secrets_b);

// No-declassification non-interference: precondition is the sequential CT
// check; every cell must give equal microarchitectural logs and empty
// declassification traces.
SecVerdict theorem1_check(const ExperimentSpec& spec);

// Declassification-aware variant: the second run is patched with the first
// run's declassification trace, which must be consumed exactly.
SecVerdict theorem2_check(const ExperimentSpec& spec);

// Classical declassification condition: microarchitectural equality is only
// required for pairs whose full declassification traces agree.
SecVerdict classical_decl_check(const ExperimentSpec& spec);

struct LeakSearchResult {
  bool found = false;
  std::optional<Witness> witness;
  std::size_t samples = 0;
};

// Walks (strategy, secret pair) cells in InsecureBaseline (or the given
// mode) until a microarchitectural divergence shows up or the budget runs out.
LeakSearchResult leak_search(const Gadget& gadget, Mode mode, std::size_t budget,
                             std::size_t steps, std::uint64_t seed);

// Runs a config standard, replays the same config patched with its own
// declassification trace, and checks for bit-identical state and log.
bool self_patching_identity(const Gadget& gadget, const std::vector<Word>& secrets,
                            const StrategySpec& strategy, std::size_t steps, Mode mode,
                            std::string* why = nullptr);

// Deterministic secret-pair table shared by all checkers.
std::vector<std::pair<std::vector<Word>, std::vector<Word>>> make_pairs(
    const std::vector<SecretSite>& sites, std::size_t count, std::uint64_t seed);

} // namespace uspec
