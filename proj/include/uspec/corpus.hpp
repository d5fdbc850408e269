#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "uspec/arch.hpp"
#include "uspec/hardware.hpp"
#include "uspec/isa.hpp"
#include "uspec/microctx.hpp"

namespace uspec {

struct UnknownGadget : std::runtime_error {
  explicit UnknownGadget(const std::string& name)
      : std::runtime_error("unknown gadget: " + name) {}
};

// A named fixture: program, memory layout, secret sites and a scripted
// schedule that drives the interesting speculation.
struct Gadget {
  std::string name;
  std::string source; // uasm text, also shipped under corpus/
  std::shared_ptr<const Program> program;
  SecretPartition partition;
  std::vector<std::pair<RegId, LabeledValue>> reg_init;
  std::vector<std::pair<Word, Word>> mem_init;
  std::vector<SecretSite> sites;
  StrategySpec attack_script;
  std::vector<std::string> tags; // ct_plain | ct_up_to_decl | leaks_insecure | rollback_demo | classical_decl_demo
  std::string note;

  bool has_tag(const std::string& t) const;
  ArchConfig base_config() const;
  HwSim make_sim(const std::vector<Word>& secrets, StrategySpec strategy,
                 HwOptions opts = {}) const;
  CtCheckSpec ct_spec(std::size_t steps, std::size_t budget, std::uint64_t seed) const;
};

const Gadget& get_gadget(const std::string& name);
std::vector<std::string> gadget_names();

} // namespace uspec
