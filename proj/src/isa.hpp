#pragma once

// Toy instruction set the simulated core executes. Code lives in its own
// address space: a code address is an instruction index.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "common.hpp"

namespace transim {

inline constexpr int kNumRegs = 16;
inline constexpr int kStackReg = 15;

enum class Opcode {
  MOVI, LD, ST, ADD, SHL, AND, CMP, BGE, CALL, RET,
  FLUSH, RDCYC, MRS, YIELD, FENCE, HALT, NOP,
};

std::string_view mnemonic(Opcode op);
std::optional<Opcode> parse_mnemonic(std::string_view text);

struct Reg {
  std::uint8_t index;
  friend bool operator==(Reg, Reg) = default;
};
struct Imm {
  std::int64_t value;
  friend bool operator==(Imm, Imm) = default;
};
struct CodeRef {
  Addr target;
  friend bool operator==(CodeRef, CodeRef) = default;
};
struct SysReg {
  std::uint32_t id;
  friend bool operator==(SysReg, SysReg) = default;
};

using Operand = std::variant<Reg, Imm, CodeRef, SysReg>;

// Operand layout per opcode:
//   MOVI rd, imm|label          LD rd, [rb+off]       ST rs, [rb+off]
//   ADD/SHL/AND rd, ra, rb|imm  CMP ra, rb|imm        BGE label
//   CALL label                  FLUSH [rb+off]        RDCYC rd
//   MRS rd, sN                  RET YIELD FENCE HALT NOP
// Memory operands are stored as a (Reg, Imm) pair.
struct Instruction {
  Opcode opcode = Opcode::NOP;
  std::vector<Operand> operands;
  int source_line = 0;

  Reg reg(std::size_t i) const { return std::get<Reg>(operands.at(i)); }
  std::int64_t imm(std::size_t i) const { return std::get<Imm>(operands.at(i)).value; }
  Addr code_target(std::size_t i) const { return std::get<CodeRef>(operands.at(i)).target; }

  friend bool operator==(const Instruction& a, const Instruction& b) {
    return a.opcode == b.opcode && a.operands == b.operands;
  }
};

struct Program {
  std::vector<Instruction> instructions;
  std::map<std::string, Addr> labels;
  Addr entry = 0;

  std::size_t size() const { return instructions.size(); }
  bool contains(Addr pc) const { return pc < instructions.size(); }
  Addr label(const std::string& name) const;

  friend bool operator==(const Program& a, const Program& b) {
    return a.instructions == b.instructions && a.labels == b.labels && a.entry == b.entry;
  }
};

class AssemblyError : public Error {
 public:
  AssemblyError(int line, const std::string& message);
  int line() const noexcept { return line_; }
  const std::string& message() const noexcept { return message_; }

 private:
  int line_;
  std::string message_;
};

// Parses one instruction per line; `label:` may stand alone or prefix an
// instruction, `;` starts a comment. Entry is the `entry` label if present,
// otherwise instruction 0.
Program assemble(std::string_view text);

// Canonical text form; assemble(disassemble(p)) == p for every assembled p.
std::string disassemble(const Program& program);

struct ValidateOptions {
  unsigned rsb_size = 16;
  bool flush_is_privileged = false;
};

struct ValidationFinding {
  enum class Kind { PrivilegedOpcode, CallDepthExceedsRsb, UnboundedRecursion, Unreachable, NoTermination };
  Kind kind;
  Addr pc;
  std::string message;
};

struct ValidationReport {
  std::vector<ValidationFinding> findings;
  std::optional<unsigned> max_call_depth;  // nullopt when recursion makes it unbounded
  std::vector<Addr> privileged;
  std::vector<Addr> unreachable;

  bool empty() const { return findings.empty(); }
};

ValidationReport validate(const Program& program, const ValidateOptions& options = {});

}  // namespace transim
