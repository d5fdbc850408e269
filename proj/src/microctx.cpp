#include "uspec/microctx.hpp"

#include <stdexcept>

#include "uspec/rng.hpp"

namespace uspec {

std::string directive_str(const Directive& d) {
  switch (d.kind) {
    case Directive::Kind::Fetch: return "fetch";
    case Directive::Kind::Execute: return "execute:" + std::to_string(d.index);
    case Directive::Kind::Retire: return "retire";
  }
  return "?";
}

std::optional<Directive> parse_directive(const std::string& s) {
  if (s == "fetch") return Directive{Directive::Kind::Fetch, 0};
  if (s == "retire") return Directive{Directive::Kind::Retire, 0};
  if (s.rfind("execute:", 0) == 0) {
    try {
      std::size_t pos = 0;
      std::size_t idx = std::stoull(s.substr(8), &pos);
      if (idx == 0 || pos != s.size() - 8) return std::nullopt;
      return Directive{Directive::Kind::Execute, idx};
    } catch (const std::exception&) {
      return std::nullopt;
    }
  }
  return std::nullopt;
}

StrategySpec StrategySpec::seeded(std::uint64_t seed) {
  StrategySpec s;
  s.kind = Kind::SeededRandom;
  s.seed = seed;
  return s;
}
StrategySpec StrategySpec::always_taken() {
  StrategySpec s;
  s.kind = Kind::AlwaysTaken;
  return s;
}
StrategySpec StrategySpec::constant(Word v) {
  StrategySpec s;
  s.kind = Kind::ConstantValue;
  s.constant_value = v;
  return s;
}
StrategySpec StrategySpec::scripted(std::vector<ScriptStep> steps, std::string name) {
  StrategySpec s;
  s.kind = Kind::Scripted;
  s.script = std::move(steps);
  s.name = std::move(name);
  return s;
}

bool StrategySpec::same_as(const StrategySpec& o) const {
  if (kind != o.kind || seed != o.seed || constant_value != o.constant_value) return false;
  if (script.size() != o.script.size()) return false;
  for (std::size_t i = 0; i < script.size(); ++i) {
    if (script[i].next != o.script[i].next) return false;
    if (script[i].predict != o.script[i].predict) return false;
  }
  return true;
}

std::string StrategySpec::describe() const {
  switch (kind) {
    case Kind::RoundRobin: return "round-robin";
    case Kind::SeededRandom: return "seeded:" + std::to_string(seed);
    case Kind::AlwaysTaken: return "always-taken";
    case Kind::ConstantValue: return "constant:" + std::to_string(constant_value);
    case Kind::Scripted: return name.empty() ? "scripted" : "script:" + name;
  }
  return "?";
}

bool MicroEvent::equals(const MicroEvent& o) const {
  if (kind != o.kind || value != o.value) return false;
  if (kind == Kind::Preamble) {
    if (reg != o.reg || buf != o.buf) return false;
    if (mem == o.mem) return true;
    if (!mem || !o.mem) return false;
    return *mem == *o.mem;
  }
  return true;
}

std::string MicroEvent::describe() const {
  switch (kind) {
    case Kind::Preamble:
      return "preamble " + (mem ? *mem : std::string("M[]")) + reg + buf;
    case Kind::LeakAddr: return "leak-addr " + std::to_string(value);
    case Kind::LeakPredTag: return "pred-tag " + std::to_string(value);
    case Kind::LeakPredValue: return "pred-value " + std::to_string(value);
  }
  return "?";
}

MicroContext::MicroContext(StrategySpec spec, std::size_t program_size,
                           const SecretPartition& part)
    : spec_(std::move(spec)), program_size_(program_size) {
  // partition boundaries are public and make natural prediction candidates
  for (const auto& [lo, hi] : part.ranges) {
    interesting_.push_back(lo);
    interesting_.push_back(hi);
    interesting_.push_back(hi + 1);
  }
}

namespace {
std::uint64_t fold(std::uint64_t h, const std::string& s) {
  for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ULL;
  return h;
}
} // namespace

void MicroContext::update(std::shared_ptr<const std::string> mem_canon, std::string reg_canon,
                          std::string buf_canon, PreambleView view) {
  // inputs are low projections by construction: nothing H-labeled may reach here
  if (reg_canon.find('H') != std::string::npos || buf_canon.find('H') != std::string::npos)
    throw std::logic_error("microarchitectural update received an H-labeled value");
  MicroEvent ev;
  ev.kind = MicroEvent::Kind::Preamble;
  ev.mem = std::move(mem_canon);
  ev.reg = std::move(reg_canon);
  ev.buf = std::move(buf_canon);
  if (ev.mem) log_hash_ = fold(log_hash_, *ev.mem);
  log_hash_ = fold(log_hash_, ev.reg);
  log_hash_ = fold(log_hash_, ev.buf);
  log_.push_back(std::move(ev));
  ++preambles_;
  last_buf_size_ = view.buf_size;
}

void MicroContext::leak_addr(Word a) {
  log_.push_back(MicroEvent{MicroEvent::Kind::LeakAddr, a, nullptr, "", ""});
  log_hash_ = hash_combine(log_hash_, a ^ 0xa11ULL);
}

void MicroContext::leak_prediction(Word tag_loc, Word predicted) {
  log_.push_back(MicroEvent{MicroEvent::Kind::LeakPredTag, tag_loc, nullptr, "", ""});
  log_.push_back(MicroEvent{MicroEvent::Kind::LeakPredValue, predicted, nullptr, "", ""});
  log_hash_ = hash_combine(hash_combine(log_hash_, tag_loc), predicted);
}

std::uint64_t MicroContext::draw(std::uint64_t salt) const {
  return mix64(hash_combine(hash_combine(spec_.seed, preambles_), log_hash_ ^ salt));
}

Directive MicroContext::round_robin() const {
  std::size_t b = last_buf_size_;
  std::size_t cycle = b + 2;
  std::size_t slot = (preambles_ == 0 ? 0 : preambles_ - 1) % cycle;
  if (slot == 0) return Directive{Directive::Kind::Fetch, 0};
  if (slot <= b) return Directive{Directive::Kind::Execute, slot};
  return Directive{Directive::Kind::Retire, 0};
}

Directive MicroContext::next() const {
  switch (spec_.kind) {
    case StrategySpec::Kind::RoundRobin:
    case StrategySpec::Kind::AlwaysTaken:
    case StrategySpec::Kind::ConstantValue:
      return round_robin();
    case StrategySpec::Kind::Scripted: {
      std::size_t i = preambles_ == 0 ? 0 : preambles_ - 1;
      if (i < spec_.script.size() && spec_.script[i].next) return *spec_.script[i].next;
      return round_robin();
    }
    case StrategySpec::Kind::SeededRandom: {
      std::size_t b = last_buf_size_;
      std::uint64_t slot = draw(0x5eedd1ULL) % (b + 2);
      if (slot == 0) return Directive{Directive::Kind::Fetch, 0};
      if (slot <= b) return Directive{Directive::Kind::Execute, static_cast<std::size_t>(slot)};
      return Directive{Directive::Kind::Retire, 0};
    }
  }
  return Directive{Directive::Kind::Fetch, 0};
}

Word MicroContext::predict(const PredictQuery& q) const {
  switch (spec_.kind) {
    case StrategySpec::Kind::RoundRobin:
      return 0;
    case StrategySpec::Kind::AlwaysTaken:
      if (q.kind == PredictQuery::Kind::BranchTarget) return q.branch_target;
      if (q.kind == PredictQuery::Kind::JumpTarget) return q.loc + 1;
      return 0;
    case StrategySpec::Kind::ConstantValue:
      return spec_.constant_value;
    case StrategySpec::Kind::Scripted: {
      std::size_t i = preambles_ == 0 ? 0 : preambles_ - 1;
      if (i < spec_.script.size() && spec_.script[i].predict) return *spec_.script[i].predict;
      return 0;
    }
    case StrategySpec::Kind::SeededRandom: {
      std::uint64_t h = draw(0x9dedULL);
      switch (q.kind) {
        case PredictQuery::Kind::BranchTarget:
          return (h & 1) ? q.branch_target : q.loc + 1;
        case PredictQuery::Kind::JumpTarget:
          return h % (program_size_ + 1);
        case PredictQuery::Kind::LoadValue: {
          // a few plausible injection candidates plus the public partition bounds
          std::size_t n_fixed = 4 + interesting_.size();
          std::uint64_t pick = mix64(h) % n_fixed;
          switch (pick) {
            case 0: return 0;
            case 1: return 1;
            case 2: return h % 64;
            case 3: return h % (program_size_ + 1);
            default: return interesting_[pick - 4];
          }
        }
      }
      return 0;
    }
  }
  return 0;
}

std::string MicroContext::canonical_bytes() const {
  std::string out;
  for (const auto& ev : log_) {
    switch (ev.kind) {
      case MicroEvent::Kind::Preamble:
        out += "P|";
        if (ev.mem) out += *ev.mem;
        out += ev.reg;
        out += ev.buf;
        break;
      case MicroEvent::Kind::LeakAddr:
        out += "A|" + std::to_string(ev.value);
        break;
      case MicroEvent::Kind::LeakPredTag:
        out += "T|" + std::to_string(ev.value);
        break;
      case MicroEvent::Kind::LeakPredValue:
        out += "V|" + std::to_string(ev.value);
        break;
    }
    out += '\n';
  }
  return out;
}

std::optional<MicroContext::Divergence> MicroContext::diverge(const MicroContext& a,
                                                              const MicroContext& b) {
  std::size_t m = std::min(a.log_.size(), b.log_.size());
  for (std::size_t i = 0; i < m; ++i)
    if (!a.log_[i].equals(b.log_[i]))
      return Divergence{i, a.log_[i].describe(), b.log_[i].describe()};
  if (a.log_.size() != b.log_.size())
    return Divergence{m, m < a.log_.size() ? a.log_[m].describe() : "<absent>",
                      m < b.log_.size() ? b.log_[m].describe() : "<absent>"};
  return std::nullopt;
}

bool mc_equal(const MicroContext& a, const MicroContext& b) {
  if (!a.strategy().same_as(b.strategy()))
    throw std::invalid_argument("microcontext comparison across different strategies");
  return !MicroContext::diverge(a, b).has_value();
}

} // namespace uspec
