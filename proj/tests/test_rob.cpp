#include <doctest.h>

#include "testutil.hpp"
#include "uspec/rob.hpp"

using namespace uspec;
using uspec::testutil::fresh_config;
using uspec::testutil::lv;

namespace {

RobEntry mov(RegId dst, Expr e, Tag tag = std::nullopt, bool incr = false) {
  RobEntry r;
  r.kind = RobEntry::Kind::Mov;
  r.dst = dst;
  r.e1 = std::move(e);
  r.tag = tag;
  r.pc_incr = incr;
  return r;
}

RobEntry loadent(RegId dst, Expr e, Tag tag = std::nullopt) {
  RobEntry r;
  r.kind = RobEntry::Kind::Load;
  r.dst = dst;
  r.e1 = std::move(e);
  r.tag = tag;
  return r;
}

RobEntry storeent(Expr ea, Expr ev, Tag tag = std::nullopt) {
  RobEntry r;
  r.kind = RobEntry::Kind::Store;
  r.e1 = std::move(ea);
  r.e2 = std::move(ev);
  r.tag = tag;
  return r;
}

} // namespace

TEST_CASE("low projection of values") {
  CHECK(low_proj_value(MaybeValue{lv(5, SecLevel::L)}) == MaybeValue{lv(5, SecLevel::L)});
  CHECK(low_proj_value(MaybeValue{lv(5, SecLevel::H)}) == MaybeValue{});
  CHECK(low_proj_value(MaybeValue{}) == MaybeValue{});
}

TEST_CASE("low memory projection hides exactly the secret cells") {
  SecretPartition part = SecretPartition::make({{16, 16}});
  MemMap m;
  m.store(15, 3);
  m.store(16, 99);
  m.store(17, 4);
  std::string canon = canon_mem_low(m, part);
  CHECK(canon.find("15:3") != std::string::npos);
  CHECK(canon.find("17:4") != std::string::npos);
  CHECK(canon.find("99") == std::string::npos);

  // empty partition keeps everything, all-secret partition hides everything
  CHECK(canon_mem_low(m, SecretPartition{}).find("99") != std::string::npos);
  SecretPartition all = SecretPartition::make({{0, ~Word(0)}});
  CHECK(canon_mem_low(m, all) == "X[0-18446744073709551615;]M[]");

  // default zero cells serialize the same whether stored or absent
  MemMap a, b;
  a.store(5, 0);
  CHECK(canon_mem_low(a, part) == canon_mem_low(b, part));
}

TEST_CASE("buffer projection replaces only secret literals") {
  ReorderBuffer buf;
  buf.push_back(mov(1, Expr::lit(lv(5, SecLevel::H))));
  ReorderBuffer proj = low_proj_buf(buf);
  CHECK(canon_buf(proj) == canon_buf(buf)); // canon already projects
  CHECK(canon_buf(buf).find('5') == std::string::npos);

  ReorderBuffer buf2;
  buf2.push_back(mov(kPcReg, Expr::lit(lv(3, SecLevel::L)), Tag{7}));
  CHECK(canon_buf(low_proj_buf(buf2)) == canon_buf(buf2));
  CHECK(canon_buf(buf2).find("@7") != std::string::npos); // tags survive

  ReorderBuffer buf3;
  buf3.push_back(storeent(Expr::reg(1), Expr::reg(2)));
  CHECK(canon_buf(buf3).find("r1") != std::string::npos); // unresolved exprs survive
}

TEST_CASE("apl folds pending writes over the register map") {
  std::vector<LabeledValue> reg = {lv(0), lv(0), lv(0)};

  std::vector<MaybeValue> id = apl({}, reg);
  for (std::size_t i = 0; i < reg.size(); ++i) CHECK(id[i] == MaybeValue{reg[i]});

  ReorderBuffer one;
  one.push_back(mov(1, Expr::lit(lv(7))));
  CHECK(apl(one, reg)[1] == MaybeValue{lv(7)});

  ReorderBuffer ld;
  ld.push_back(loadent(1, Expr::lit(lv(3))));
  CHECK(apl(ld, reg)[1] == MaybeValue{});

  ReorderBuffer st;
  st.push_back(storeent(Expr::reg(1), Expr::reg(2)));
  std::vector<MaybeValue> after = apl(st, reg);
  for (std::size_t i = 0; i < reg.size(); ++i) CHECK(after[i] == MaybeValue{reg[i]});

  // unresolved mov undefines its target
  ReorderBuffer un;
  un.push_back(mov(2, Expr::bin(BinOp::Add, Expr::reg(1), Expr::lit(lv(1)))));
  CHECK(apl(un, reg)[2] == MaybeValue{});
}

TEST_CASE("aplsan sanitizes exactly when a prediction is pending") {
  std::vector<LabeledValue> reg = {lv(0), lv(5, SecLevel::H), lv(2, SecLevel::L)};

  ReorderBuffer untagged;
  untagged.push_back(mov(2, Expr::lit(lv(9))));
  CHECK(aplsan(untagged, reg) == apl(untagged, reg));
  CHECK(aplsan(untagged, reg)[1] == MaybeValue{lv(5, SecLevel::H)});

  ReorderBuffer tagged = untagged;
  tagged.push_back(mov(2, Expr::lit(lv(9)), Tag{4}));
  CHECK(aplsan(tagged, reg)[1] == MaybeValue{});            // H scrubbed
  CHECK(aplsan(tagged, reg)[2] == MaybeValue{lv(9)});       // L survives
}

TEST_CASE("deep update resolves predictions against the program") {
  Program p = parse_program(
      ".regs x\n"
      "beqz x, 9\n"
      "x <- load 16\n"
      "store 20, x\n");
  SecretPartition part = SecretPartition::make({{16, 16}});
  ArchConfig a = fresh_config(p);
  a.mem.store(16, 77);

  // empty buffer is the identity
  CHECK(deep_update(p, part, a, {}).config == a);

  // a mispredicted branch target is re-resolved from the program: x == 0 here,
  // so the branch goes to 9 regardless of the predicted 5
  ReorderBuffer buf;
  buf.push_back(mov(kPcReg, Expr::lit(lv(5)), Tag{0}));
  ArchConfig out = deep_update(p, part, a, buf).config;
  CHECK(out.reg[kPcReg].value == 9);

  // a predicted load value is re-read from memory with its partition level
  ReorderBuffer lbuf;
  lbuf.push_back(mov(1, Expr::lit(lv(0)), Tag{1}));
  ArchConfig lout = deep_update(p, part, a, lbuf).config;
  CHECK(lout.reg[1] == lv(77, SecLevel::H));

  // patched deep update consumes the trace at public stores
  ReorderBuffer sbuf;
  sbuf.push_back(storeent(Expr::lit(lv(20)), Expr::lit(lv(9))));
  DeclassTrace d = {7};
  DeepUpdateResult res = deep_update_patched(p, part, a, sbuf, d);
  CHECK(res.status == StepStatus::Ok);
  CHECK(res.config.mem.load(20) == 7);
  CHECK(d.empty());

  DeclassTrace empty;
  CHECK(deep_update_patched(p, part, a, sbuf, empty).status == StepStatus::DeclassUnderflow);
}

TEST_CASE("transient predicate follows goodpred") {
  Program p = parse_program(
      ".regs x\n"
      "beqz x, 9\n"
      "x <- load 17\n");
  SecretPartition part = SecretPartition::make({{16, 16}});
  ArchConfig a = fresh_config(p);
  a.mem.store(17, 5);

  CHECK(!is_transient(p, part, a, {}));

  // branch predicted where it architecturally goes: not transient
  ReorderBuffer good;
  good.push_back(mov(kPcReg, Expr::lit(lv(9)), Tag{0}));
  CHECK(!is_transient(p, part, a, good));

  ReorderBuffer bad;
  bad.push_back(mov(kPcReg, Expr::lit(lv(1)), Tag{0}));
  CHECK(is_transient(p, part, a, bad));

  // correct load-value prediction of public memory: not transient
  ReorderBuffer lgood;
  lgood.push_back(mov(1, Expr::lit(lv(5)), Tag{1}));
  CHECK(!is_transient(p, part, a, lgood));

  // a prediction of secret memory is transient even when the value matches
  Program ps = parse_program(".regs x\nx <- load 16\n");
  ArchConfig as = fresh_config(ps);
  as.mem.store(16, 0);
  ReorderBuffer lsec;
  lsec.push_back(mov(1, Expr::lit(lv(0)), Tag{0}));
  CHECK(is_transient(ps, part, as, lsec));
}

TEST_CASE("well-formedness diagnoses hand-built buffers") {
  Program p = parse_program(".regs x\nx <- 1\n");
  SecretPartition part;
  ArchConfig a = fresh_config(p);

  CHECK(check_wellformed(p, part, a, {}).ok);

  ReorderBuffer bad;
  bad.push_back(mov(kPcReg, Expr::lit(lv(3, SecLevel::H))));
  WfReport r = check_wellformed(p, part, a, bad);
  CHECK(!r.ok);
  CHECK(r.diagnosis.find("pc level must be L") != std::string::npos);

  // an entry that does not match the program instruction
  ReorderBuffer mism;
  mism.push_back(storeent(Expr::lit(lv(1)), Expr::lit(lv(2))));
  mism.push_back(mov(kPcReg, Expr::lit(lv(1)), std::nullopt, true));
  CHECK(!check_wellformed(p, part, a, mism).ok);

  // the matching pair is fine
  ReorderBuffer good;
  good.push_back(mov(1, Expr::lit(lv(1))));
  good.push_back(mov(kPcReg, Expr::lit(lv(1)), std::nullopt, true));
  CHECK(check_wellformed(p, part, a, good).ok);
}

TEST_CASE("low memory projection as a total function") {
  SecretPartition part = SecretPartition::make({{16, 16}});
  MemMap m;
  m.store(16, 9);
  m.store(3, 4);
  CHECK(low_proj_mem(m, part, 16) == MaybeValue{});
  CHECK(low_proj_mem(m, part, 3) == MaybeValue{lv(4)});
  CHECK(low_proj_mem(m, part, 1000) == MaybeValue{lv(0)}); // absent cells read 0
}
