#include "uspec/isa.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <sstream>

namespace uspec {

const char* binop_name(BinOp op) {
  switch (op) {
    case BinOp::Add: return "+";
    case BinOp::Sub: return "-";
    case BinOp::Mul: return "*";
    case BinOp::And: return "&";
    case BinOp::Or: return "|";
    case BinOp::Xor: return "^";
    case BinOp::Shl: return "<<";
    case BinOp::Shr: return ">>";
    case BinOp::Eq: return "==";
    case BinOp::Ult: return "<";
  }
  return "?";
}

Word apply_binop(BinOp op, Word a, Word b) {
  switch (op) {
    case BinOp::Add: return a + b;
    case BinOp::Sub: return a - b;
    case BinOp::Mul: return a * b;
    case BinOp::And: return a & b;
    case BinOp::Or: return a | b;
    case BinOp::Xor: return a ^ b;
    case BinOp::Shl: return b >= 64 ? 0 : a << b;
    case BinOp::Shr: return b >= 64 ? 0 : a >> b;
    case BinOp::Eq: return a == b ? 1 : 0;
    case BinOp::Ult: return a < b ? 1 : 0;
  }
  return 0;
}

bool Expr::contains_op(BinOp op) const {
  switch (kind_) {
    case Kind::Lit:
    case Kind::Reg: return false;
    case Kind::Bin: return op_ == op || lhs_->contains_op(op) || rhs_->contains_op(op);
  }
  return false;
}

bool Expr::structurally_equal(const Expr& o) const {
  if (kind_ != o.kind_) return false;
  switch (kind_) {
    case Kind::Lit: return lit_ == o.lit_;
    case Kind::Reg: return reg_ == o.reg_;
    case Kind::Bin:
      return op_ == o.op_ && lhs_->structurally_equal(*o.lhs_) && rhs_->structurally_equal(*o.rhs_);
  }
  return false;
}

MaybeValue eval_expr(const Expr& e, std::span<const MaybeValue> regs) {
  switch (e.kind()) {
    case Expr::Kind::Lit: return e.lit();
    case Expr::Kind::Reg: return regs[e.reg()];
    case Expr::Kind::Bin: {
      MaybeValue a = eval_expr(e.lhs(), regs);
      if (!a) return std::nullopt;
      MaybeValue b = eval_expr(e.rhs(), regs);
      if (!b) return std::nullopt;
      return LabeledValue{apply_binop(e.op(), a->value, b->value), join(a->level, b->level)};
    }
  }
  return std::nullopt;
}

std::optional<RegId> Program::find_reg(const std::string& name) const {
  for (std::size_t i = 0; i < reg_names.size(); ++i)
    if (reg_names[i] == name) return static_cast<RegId>(i);
  return std::nullopt;
}

SecretPartition SecretPartition::make(std::vector<std::pair<Word, Word>> rs) {
  for (const auto& [lo, hi] : rs)
    if (lo > hi) throw std::invalid_argument("secret range with lo > hi");
  std::sort(rs.begin(), rs.end());
  for (std::size_t i = 1; i < rs.size(); ++i)
    if (rs[i].first <= rs[i - 1].second) throw std::invalid_argument("overlapping secret ranges");
  return SecretPartition{std::move(rs)};
}

namespace {

// ---------------------------------------------------------------------------
// Parser

struct Token {
  enum class Kind { Ident, Number, Op, Arrow, Comma, LParen, RParen, Colon, Directive, End };
  Kind kind;
  std::string text;
  Word number = 0;
  BinOp op = BinOp::Add;
};

class Lexer {
 public:
  Lexer(const std::string& s, int line) : s_(s), line_(line) { advance(); }

  const Token& peek() const { return tok_; }
  Token next() {
    Token t = tok_;
    advance();
    return t;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(line_, msg); }

  void advance() {
    while (i_ < s_.size() && (s_[i_] == ' ' || s_[i_] == '\t')) ++i_;
    if (i_ + 1 < s_.size() && s_[i_] == '/' && s_[i_ + 1] == '/') i_ = s_.size();
    if (i_ >= s_.size()) {
      tok_ = {Token::Kind::End, ""};
      return;
    }
    char c = s_[i_];
    if (std::isdigit(static_cast<unsigned char>(c))) {
      std::size_t start = i_;
      int base = 10;
      if (c == '0' && i_ + 1 < s_.size() && (s_[i_ + 1] == 'x' || s_[i_ + 1] == 'X')) {
        base = 16;
        i_ += 2;
        start = i_;
      }
      while (i_ < s_.size() && std::isalnum(static_cast<unsigned char>(s_[i_]))) ++i_;
      Word v = 0;
      auto [p, ec] = std::from_chars(s_.data() + start, s_.data() + i_, v, base);
      if (ec != std::errc() || p != s_.data() + i_) fail("bad numeric literal");
      tok_ = {Token::Kind::Number, s_.substr(start, i_ - start), v};
      return;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '.') {
      std::size_t start = i_;
      ++i_;
      while (i_ < s_.size() &&
             (std::isalnum(static_cast<unsigned char>(s_[i_])) || s_[i_] == '_')) ++i_;
      std::string text = s_.substr(start, i_ - start);
      tok_ = {c == '.' ? Token::Kind::Directive : Token::Kind::Ident, text};
      return;
    }
    auto two = [&](char a, char b) {
      return c == a && i_ + 1 < s_.size() && s_[i_ + 1] == b;
    };
    if (two('<', '-')) { i_ += 2; tok_ = {Token::Kind::Arrow, "<-"}; return; }
    if (two('<', '<')) { i_ += 2; tok_ = mkop(BinOp::Shl); return; }
    if (two('>', '>')) { i_ += 2; tok_ = mkop(BinOp::Shr); return; }
    if (two('=', '=')) { i_ += 2; tok_ = mkop(BinOp::Eq); return; }
    ++i_;
    switch (c) {
      case '+': tok_ = mkop(BinOp::Add); return;
      case '-': tok_ = mkop(BinOp::Sub); return;
      case '*': tok_ = mkop(BinOp::Mul); return;
      case '&': tok_ = mkop(BinOp::And); return;
      case '|': tok_ = mkop(BinOp::Or); return;
      case '^': tok_ = mkop(BinOp::Xor); return;
      case '<': tok_ = mkop(BinOp::Ult); return;
      case ',': tok_ = {Token::Kind::Comma, ","}; return;
      case '(': tok_ = {Token::Kind::LParen, "("}; return;
      case ')': tok_ = {Token::Kind::RParen, ")"}; return;
      case ':': tok_ = {Token::Kind::Colon, ":"}; return;
      default: fail(std::string("unexpected character '") + c + "'");
    }
  }

  Token mkop(BinOp op) {
    Token t{Token::Kind::Op, binop_name(op)};
    t.op = op;
    return t;
  }

  const std::string& s_;
  std::size_t i_ = 0;
  int line_;
  Token tok_;
};

int precedence(BinOp op) {
  switch (op) {
    case BinOp::Mul: return 6;
    case BinOp::Add:
    case BinOp::Sub: return 5;
    case BinOp::Shl:
    case BinOp::Shr: return 4;
    case BinOp::And: return 3;
    case BinOp::Xor: return 2;
    case BinOp::Or: return 1;
    case BinOp::Eq:
    case BinOp::Ult: return 0;
  }
  return 0;
}

bool is_keyword(const std::string& s) {
  return s == "load" || s == "store" || s == "jmp" || s == "beqz";
}

struct PendingExpr {
  // Unresolved identifiers are fixed up once all labels are known.
  enum class Kind { Lit, Name, Bin };
  Kind kind;
  LabeledValue lit{};
  std::string name;
  BinOp op = BinOp::Add;
  std::unique_ptr<PendingExpr> lhs, rhs;
  int line = 0;
};

struct PendingInstr {
  Instruction::Kind kind;
  std::string dst;
  std::unique_ptr<PendingExpr> e1, e2;
  std::string target_label; // beqz target, may also be numeric
  Word target_loc = 0;
  bool target_is_label = false;
  int line = 0;
};

class ProgramParser {
 public:
  Program run(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      parse_line(line, lineno);
    }
    return finish();
  }

 private:
  void parse_line(const std::string& line, int lineno) {
    Lexer lx(line, lineno);
    if (lx.peek().kind == Token::Kind::End) return;

    if (lx.peek().kind == Token::Kind::Directive) {
      Token d = lx.next();
      if (d.text == ".regs") {
        for (;;) {
          Token r = lx.next();
          if (r.kind != Token::Kind::Ident) throw ParseError(lineno, ".regs expects register names");
          declare_reg(r.text, lineno);
          if (lx.peek().kind != Token::Kind::Comma) break;
          lx.next();
        }
        explicit_regs_ = true;
      } else if (d.text == ".entry") {
        Token t = lx.next();
        if (t.kind == Token::Kind::Number) {
          entry_ = t.number;
        } else if (t.kind == Token::Kind::Ident) {
          entry_label_ = t.text;
          entry_line_ = lineno;
        } else {
          throw ParseError(lineno, ".entry expects a location or label");
        }
      } else {
        throw ParseError(lineno, "unknown directive " + d.text);
      }
      expect_end(lx, lineno);
      return;
    }

    // Leading label?
    if (lx.peek().kind == Token::Kind::Ident) {
      Lexer probe = lx;
      Token id = probe.next();
      if (probe.peek().kind == Token::Kind::Colon) {
        lx.next();
        lx.next();
        define_label(id.text, lineno);
        if (lx.peek().kind == Token::Kind::End) return;
      }
    }

    PendingInstr ins;
    ins.line = lineno;
    Token first = lx.next();
    if (first.kind != Token::Kind::Ident) throw ParseError(lineno, "expected instruction");

    if (first.text == "store") {
      ins.kind = Instruction::Kind::Store;
      ins.e1 = parse_expr(lx, lineno);
      expect(lx, Token::Kind::Comma, lineno, "','");
      ins.e2 = parse_expr(lx, lineno);
    } else if (first.text == "jmp") {
      ins.kind = Instruction::Kind::Jmp;
      ins.e1 = parse_expr(lx, lineno);
    } else if (first.text == "beqz") {
      ins.kind = Instruction::Kind::Beqz;
      ins.e1 = parse_expr(lx, lineno);
      expect(lx, Token::Kind::Comma, lineno, "','");
      Token t = lx.next();
      if (t.kind == Token::Kind::Number) {
        ins.target_loc = t.number;
      } else if (t.kind == Token::Kind::Ident) {
        ins.target_label = t.text;
        ins.target_is_label = true;
      } else {
        throw ParseError(lineno, "beqz expects a target location or label");
      }
    } else {
      // "x <- expr" or "x <- load expr"
      if (is_keyword(first.text)) throw ParseError(lineno, "misplaced keyword " + first.text);
      ins.dst = first.text;
      expect(lx, Token::Kind::Arrow, lineno, "'<-'");
      if (lx.peek().kind == Token::Kind::Ident && lx.peek().text == "load") {
        lx.next();
        ins.kind = Instruction::Kind::Load;
      } else {
        ins.kind = Instruction::Kind::Mov;
      }
      ins.e1 = parse_expr(lx, lineno);
    }
    expect_end(lx, lineno);
    pending_.push_back(std::move(ins));
  }

  std::unique_ptr<PendingExpr> parse_expr(Lexer& lx, int lineno) { return parse_bin(lx, lineno, -1); }

  std::unique_ptr<PendingExpr> parse_bin(Lexer& lx, int lineno, int min_prec) {
    auto lhs = parse_atom(lx, lineno);
    while (lx.peek().kind == Token::Kind::Op && precedence(lx.peek().op) > min_prec) {
      Token op = lx.next();
      auto rhs = parse_bin(lx, lineno, precedence(op.op));
      auto node = std::make_unique<PendingExpr>();
      node->kind = PendingExpr::Kind::Bin;
      node->op = op.op;
      node->lhs = std::move(lhs);
      node->rhs = std::move(rhs);
      node->line = lineno;
      lhs = std::move(node);
    }
    return lhs;
  }

  std::unique_ptr<PendingExpr> parse_atom(Lexer& lx, int lineno) {
    Token t = lx.next();
    auto node = std::make_unique<PendingExpr>();
    node->line = lineno;
    if (t.kind == Token::Kind::Number) {
      node->kind = PendingExpr::Kind::Lit;
      node->lit = LabeledValue{t.number, SecLevel::L};
      return node;
    }
    if (t.kind == Token::Kind::Ident) {
      if (is_keyword(t.text)) throw ParseError(lineno, "misplaced keyword " + t.text);
      node->kind = PendingExpr::Kind::Name;
      node->name = t.text;
      return node;
    }
    if (t.kind == Token::Kind::LParen) {
      auto inner = parse_bin(lx, lineno, -1);
      expect(lx, Token::Kind::RParen, lineno, "')'");
      return inner;
    }
    throw ParseError(lineno, "expected expression");
  }

  void expect(Lexer& lx, Token::Kind k, int lineno, const char* what) {
    if (lx.peek().kind != k) throw ParseError(lineno, std::string("expected ") + what);
    lx.next();
  }
  void expect_end(Lexer& lx, int lineno) {
    if (lx.peek().kind != Token::Kind::End) throw ParseError(lineno, "trailing input");
  }

  void define_label(const std::string& name, int lineno) {
    if (labels_.count(name)) throw ParseError(lineno, "duplicate label " + name);
    if (name == "pc") throw ParseError(lineno, "pc cannot be a label");
    labels_[name] = pending_.size();
  }

  RegId declare_reg(const std::string& name, int lineno) {
    if (name == "pc") throw ParseError(lineno, "pc is implicit");
    for (std::size_t i = 0; i < regs_.size(); ++i)
      if (regs_[i] == name) return static_cast<RegId>(i);
    regs_.push_back(name);
    return static_cast<RegId>(regs_.size() - 1);
  }

  RegId resolve_reg(const std::string& name, int lineno) {
    if (name == "pc") throw ParseError(lineno, "pc cannot be used here");
    for (std::size_t i = 0; i < regs_.size(); ++i)
      if (regs_[i] == name) return static_cast<RegId>(i);
    if (explicit_regs_) throw ParseError(lineno, "unknown register " + name);
    regs_.push_back(name);
    return static_cast<RegId>(regs_.size() - 1);
  }

  Expr resolve_expr(const PendingExpr& pe) {
    switch (pe.kind) {
      case PendingExpr::Kind::Lit: return Expr::lit(pe.lit);
      case PendingExpr::Kind::Name: {
        auto it = labels_.find(pe.name);
        if (it != labels_.end())
          return Expr::lit(LabeledValue{static_cast<Word>(it->second), SecLevel::L});
        return Expr::reg(resolve_reg(pe.name, pe.line));
      }
      case PendingExpr::Kind::Bin:
        return Expr::bin(pe.op, resolve_expr(*pe.lhs), resolve_expr(*pe.rhs));
    }
    throw std::logic_error("bad expr");
  }

  Program finish() {
    // a name used both as label and register is rejected lazily: labels win,
    // and .regs declarations may not collide with labels
    for (const auto& r : regs_)
      if (labels_.count(r)) throw ParseError(1, "name used as both label and register: " + r);

    Program p;
    p.reg_names.push_back("pc");
    for (PendingInstr& pi : pending_) {
      Instruction ins;
      ins.kind = pi.kind;
      if (pi.kind == Instruction::Kind::Mov || pi.kind == Instruction::Kind::Load)
        ins.dst = resolve_reg(pi.dst, pi.line) + 1; // shifted below
      if (pi.e1) ins.e1 = resolve_expr(*pi.e1);
      if (pi.e2) ins.e2 = resolve_expr(*pi.e2);
      if (pi.kind == Instruction::Kind::Beqz) {
        if (pi.target_is_label) {
          auto it = labels_.find(pi.target_label);
          if (it == labels_.end())
            throw ParseError(pi.line, "undefined label " + pi.target_label);
          ins.target = static_cast<Word>(it->second);
        } else {
          ins.target = pi.target_loc;
        }
      }
      p.instrs.push_back(std::move(ins));
    }
    // Register ids were assigned without pc; shift them by one so pc occupies id 0.
    for (auto& ins : p.instrs) {
      shift_regs(ins.e1);
      shift_regs(ins.e2);
    }
    for (const auto& r : regs_) p.reg_names.push_back(r);
    if (entry_label_) {
      auto it = labels_.find(*entry_label_);
      if (it == labels_.end()) throw ParseError(entry_line_, "undefined label " + *entry_label_);
      p.entrypoint = static_cast<Word>(it->second);
    } else {
      p.entrypoint = entry_;
    }
    return p;
  }

  void shift_regs(Expr& e) {
    // Expr is immutable; rebuild with shifted register ids.
    e = shifted(e);
  }
  Expr shifted(const Expr& e) {
    switch (e.kind()) {
      case Expr::Kind::Lit: return e;
      case Expr::Kind::Reg: return Expr::reg(e.reg() + 1);
      case Expr::Kind::Bin: return Expr::bin(e.op(), shifted(e.lhs()), shifted(e.rhs()));
    }
    return e;
  }

  std::vector<PendingInstr> pending_;
  std::map<std::string, std::size_t> labels_;
  std::vector<std::string> regs_;
  bool explicit_regs_ = false;
  Word entry_ = 0;
  std::optional<std::string> entry_label_;
  int entry_line_ = 0;
};

void print_expr_prec(const Expr& e, const Program& p, int parent_prec, std::string& out) {
  switch (e.kind()) {
    case Expr::Kind::Lit:
      out += std::to_string(e.lit().value);
      return;
    case Expr::Kind::Reg:
      out += p.reg_names[e.reg()];
      return;
    case Expr::Kind::Bin: {
      int prec = precedence(e.op());
      bool paren = prec <= parent_prec;
      if (paren) out += '(';
      print_expr_prec(e.lhs(), p, prec - 1, out);
      out += ' ';
      out += binop_name(e.op());
      out += ' ';
      print_expr_prec(e.rhs(), p, prec, out);
      if (paren) out += ')';
      return;
    }
  }
}

} // namespace

Program parse_program(const std::string& text) { return ProgramParser().run(text); }

std::string print_expr(const Expr& e, const Program& p) {
  std::string out;
  print_expr_prec(e, p, -1, out);
  return out;
}

std::string print_instruction(const Instruction& ins, const Program& p) {
  switch (ins.kind) {
    case Instruction::Kind::Mov:
      return p.reg_names[ins.dst] + " <- " + print_expr(ins.e1, p);
    case Instruction::Kind::Load:
      return p.reg_names[ins.dst] + " <- load " + print_expr(ins.e1, p);
    case Instruction::Kind::Store:
      return "store " + print_expr(ins.e1, p) + ", " + print_expr(ins.e2, p);
    case Instruction::Kind::Jmp:
      return "jmp " + print_expr(ins.e1, p);
    case Instruction::Kind::Beqz:
      return "beqz " + print_expr(ins.e1, p) + ", " + std::to_string(ins.target);
  }
  return "";
}

std::string print_program(const Program& p) {
  std::string out;
  if (p.reg_names.size() > 1) {
    out += ".regs ";
    for (std::size_t i = 1; i < p.reg_names.size(); ++i) {
      if (i > 1) out += ", ";
      out += p.reg_names[i];
    }
    out += '\n';
  }
  if (p.entrypoint != 0) out += ".entry " + std::to_string(p.entrypoint) + "\n";
  for (const auto& ins : p.instrs) {
    out += print_instruction(ins, p);
    out += '\n';
  }
  return out;
}

namespace {
bool instr_equal(const Instruction& a, const Instruction& b) {
  if (a.kind != b.kind) return false;
  if (a.dst != b.dst || a.target != b.target) return false;
  return a.e1.structurally_equal(b.e1) && a.e2.structurally_equal(b.e2);
}
} // namespace

bool programs_equal(const Program& a, const Program& b) {
  if (a.entrypoint != b.entrypoint) return false;
  if (a.reg_names != b.reg_names) return false;
  if (a.instrs.size() != b.instrs.size()) return false;
  for (std::size_t i = 0; i < a.instrs.size(); ++i)
    if (!instr_equal(a.instrs[i], b.instrs[i])) return false;
  return true;
}

} // namespace uspec
