#include <gtest/gtest.h>

#include <random>

#include "attacks.hpp"
#include "covert.hpp"
#include "isa.hpp"
#include "mitigations.hpp"
#include "support/oracles.hpp"

using namespace transim;

TEST(Assembler, ParsesLabelsOperandsAndEntry) {
  auto p = assemble(R"(; comment line
start:
  MOVI r1, 5        ; trailing comment
entry: ADD r2, r1, -3
  LD r3, [r2+16]
  ST r3, [sp-8]
  CMP r3, 0
  BGE start
  CALL fn
  MRS r4, s3
  HALT
fn:
  MOVI r5, @2
  RET
)");
  ASSERT_EQ(p.size(), 11u);
  EXPECT_EQ(p.entry, 1u);
  EXPECT_EQ(p.label("fn"), 9u);
  EXPECT_EQ(p.instructions[0].opcode, Opcode::MOVI);
  EXPECT_EQ(p.instructions[0].imm(1), 5);
  EXPECT_EQ(p.instructions[2].reg(1).index, 2);
  EXPECT_EQ(p.instructions[2].imm(2), 16);
  EXPECT_EQ(p.instructions[3].reg(1).index, kStackReg);
  EXPECT_EQ(p.instructions[3].imm(2), -8);
  EXPECT_EQ(p.instructions[5].code_target(0), 0u);
  EXPECT_EQ(std::get<SysReg>(p.instructions[7].operands[1]).id, 3u);
  EXPECT_EQ(p.instructions[9].code_target(1), 2u);
}

TEST(Assembler, EntryDefaultsToFirstInstruction) {
  auto p = assemble("  NOP\n  HALT\n");
  EXPECT_EQ(p.entry, 0u);
}

TEST(Assembler, ReportsLineNumbers) {
  struct Case {
    const char* src;
    int line;
  };
  for (auto c : {Case{"  NOP\n  FROB r1\n", 2}, Case{"  MOVI r16, 1\n", 1}, Case{"  NOP\n  NOP\n  BGE nowhere\n", 3},
                 Case{"a:\n  NOP\na:\n  HALT\n", 3}, Case{"  LD r1, r2\n", 1}, Case{"  ADD r1, r2\n", 1}}) {
    try {
      assemble(c.src);
      FAIL() << "accepted: " << c.src;
    } catch (const AssemblyError& e) {
      EXPECT_EQ(e.line(), c.line) << c.src;
      EXPECT_EQ(e.code(), ErrorCode::Assembly);
      EXPECT_NE(std::string(e.what()).find("line " + std::to_string(c.line)), std::string::npos) << e.what();
    }
  }
}

TEST(Assembler, DisassemblyRoundTrips) {
  std::vector<std::string> sources = {std::string(spectre_v1_source()),  std::string(speculative_load_source()),
                                      std::string(spectre_rsb_source()), std::string(meltdown_v3_source()),
                                      std::string(meltdown_v3a_source()), std::string(spectre_v4_source()),
                                      covert_image_source(3),             refill_bypass_source(16)};
  std::mt19937_64 rng(99);
  for (int i = 0; i < 200; ++i) sources.push_back(oracle::random_program(rng));
  for (const auto& src : sources) {
    auto p = assemble(src);
    auto text = disassemble(p);
    EXPECT_EQ(assemble(text), p) << text;
    EXPECT_EQ(disassemble(assemble(text)), text);
  }
}

TEST(Validate, FlagsPrivilegedOpcodes) {
  auto p = assemble("  MRS r1, s0\n  FLUSH [r2+0]\n  HALT\n");
  auto r = validate(p, {});
  ASSERT_EQ(r.privileged.size(), 1u);
  EXPECT_EQ(r.privileged[0], 0u);
  ValidateOptions strict;
  strict.flush_is_privileged = true;
  EXPECT_EQ(validate(p, strict).privileged.size(), 2u);
}

TEST(Validate, CallDepthAgainstRsbCapacity) {
  std::string src = "entry:\n  CALL f0\n  HALT\n";
  for (int i = 0; i < 6; ++i) src += "f" + std::to_string(i) + ":\n  CALL f" + std::to_string(i + 1) + "\n  RET\n";
  src += "f6:\n  RET\n";
  auto p = assemble(src);
  ValidateOptions opts;
  opts.rsb_size = 8;
  auto ok = validate(p, opts);
  ASSERT_TRUE(ok.max_call_depth.has_value());
  EXPECT_EQ(*ok.max_call_depth, 7u);
  EXPECT_TRUE(ok.empty());
  opts.rsb_size = 4;
  auto bad = validate(p, opts);
  ASSERT_EQ(bad.findings.size(), 1u);
  EXPECT_EQ(bad.findings[0].kind, ValidationFinding::Kind::CallDepthExceedsRsb);
}

TEST(Validate, RecursionUnreachableAndTermination) {
  auto rec = validate(assemble("entry:\n  CALL f\n  HALT\nf:\n  CALL f\n  RET\n"));
  EXPECT_FALSE(rec.max_call_depth.has_value());
  EXPECT_EQ(rec.findings.at(0).kind, ValidationFinding::Kind::UnboundedRecursion);

  auto dead = validate(assemble("  HALT\n  NOP\n"));
  ASSERT_EQ(dead.unreachable.size(), 1u);
  EXPECT_EQ(dead.unreachable[0], 1u);

  auto spin = validate(assemble("top:\n  CMP r0, r0\n  BGE top\n"));
  bool found = false;
  for (const auto& f : spin.findings) found |= f.kind == ValidationFinding::Kind::NoTermination;
  EXPECT_TRUE(found);
}

TEST(Validate, GeneratedProgramsAreClean) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 100; ++i) {
    auto r = validate(assemble(oracle::random_program(rng)), {});
    EXPECT_TRUE(r.privileged.empty());
    ASSERT_TRUE(r.max_call_depth.has_value());
    EXPECT_LE(*r.max_call_depth, 3u);
  }
}
