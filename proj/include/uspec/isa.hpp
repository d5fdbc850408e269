#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace uspec {

using Word = std::uint64_t;

enum class SecLevel : std::uint8_t { L = 0, H = 1 };

inline SecLevel join(SecLevel a, SecLevel b) {
  return (a == SecLevel::H || b == SecLevel::H) ? SecLevel::H : SecLevel::L;
}

// A machine word together with its security level.
struct LabeledValue {
  Word value = 0;
  SecLevel level = SecLevel::L;

  friend bool operator==(const LabeledValue&, const LabeledValue&) = default;
};

// Unresolved / sanitized slots are represented by an empty optional.
using MaybeValue = std::optional<LabeledValue>;

// Registers are interned; id 0 is always the program counter.
using RegId = std::uint32_t;
inline constexpr RegId kPcReg = 0;

enum class BinOp : std::uint8_t { Add, Sub, Mul, And, Or, Xor, Shl, Shr, Eq, Ult };

const char* binop_name(BinOp op);

// Wrap-around 64-bit semantics. Shift amounts >= 64 shift everything out.
Word apply_binop(BinOp op, Word a, Word b);

class Expr;
using ExprPtr = std::shared_ptr<const Expr>;

// Expression tree shared between ISA instructions and ROB entries.
// Nodes are immutable; copies share subtrees.
class Expr {
 public:
  enum class Kind : std::uint8_t { Lit, Reg, Bin };

  static Expr lit(LabeledValue v) {
    Expr e;
    e.kind_ = Kind::Lit;
    e.lit_ = v;
    return e;
  }
  static Expr reg(RegId r) {
    Expr e;
    e.kind_ = Kind::Reg;
    e.reg_ = r;
    return e;
  }
  static Expr bin(BinOp op, Expr lhs, Expr rhs) {
    Expr e;
    e.kind_ = Kind::Bin;
    e.op_ = op;
    e.lhs_ = std::make_shared<const Expr>(std::move(lhs));
    e.rhs_ = std::make_shared<const Expr>(std::move(rhs));
    return e;
  }

  Kind kind() const { return kind_; }
  bool is_value() const { return kind_ == Kind::Lit; }
  const LabeledValue& lit() const { return lit_; }
  RegId reg() const { return reg_; }
  BinOp op() const { return op_; }
  const Expr& lhs() const { return *lhs_; }
  const Expr& rhs() const { return *rhs_; }

  bool contains_op(BinOp op) const;
  bool structurally_equal(const Expr& other) const;

 private:
  Kind kind_ = Kind::Lit;
  LabeledValue lit_{};
  RegId reg_ = 0;
  BinOp op_ = BinOp::Add;
  ExprPtr lhs_, rhs_;
};

// Undefined as soon as any referenced register is undefined; levels join.
MaybeValue eval_expr(const Expr& e, std::span<const MaybeValue> regs);

struct Instruction {
  enum class Kind : std::uint8_t { Mov, Jmp, Beqz, Load, Store };
  Kind kind = Kind::Mov;
  RegId dst = 0;   // Mov / Load target, never pc
  Expr e1;         // Mov source / Jmp target / Beqz condition / Load address / Store address
  Expr e2;         // Store value
  Word target = 0; // Beqz branch target location
};

struct Program {
  std::vector<Instruction> instrs; // locations 0..k-1
  Word entrypoint = 0;
  std::vector<std::string> reg_names; // index == RegId, [0] == "pc"

  const Instruction* at(Word loc) const {
    if (loc >= instrs.size()) return nullptr;
    return &instrs[static_cast<std::size_t>(loc)];
  }
  std::size_t size() const { return instrs.size(); }
  std::size_t reg_count() const { return reg_names.size(); }
  std::optional<RegId> find_reg(const std::string& name) const;
};

struct ParseError : std::runtime_error {
  int line;
  ParseError(int line_, const std::string& msg)
      : std::runtime_error("line " + std::to_string(line_) + ": " + msg), line(line_) {}
};

// One instruction per line, `Lname:` labels, `//` comments, optional
// `.regs a, b, c` declarations. Grammar in docs/uasm.md.
Program parse_program(const std::string& text);

std::string print_program(const Program& p);
std::string print_expr(const Expr& e, const Program& p);
std::string print_instruction(const Instruction& ins, const Program& p);

bool programs_equal(const Program& a, const Program& b);

// Security memory partition: fixed per run, H inside the ranges.
struct SecretPartition {
  std::vector<std::pair<Word, Word>> ranges; // inclusive [lo, hi], disjoint

  static SecretPartition make(std::vector<std::pair<Word, Word>> rs);
  SecLevel memsec(Word addr) const {
    for (const auto& [lo, hi] : ranges)
      if (addr >= lo && addr <= hi) return SecLevel::H;
    return SecLevel::L;
  }
};

// Sparse memory, absent cells read as 0.
struct MemMap {
  std::map<Word, Word> cells;

  Word load(Word a) const {
    auto it = cells.find(a);
    return it == cells.end() ? 0 : it->second;
  }
  void store(Word a, Word v) {
    if (v == 0)
      cells.erase(a); // keep default-0 cells implicit so serialization is canonical
    else
      cells[a] = v;
  }
  friend bool operator==(const MemMap&, const MemMap&) = default;
};

} // namespace uspec
