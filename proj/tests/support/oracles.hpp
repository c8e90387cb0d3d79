#pragma once

// Independent reference models used by the tests: a list-based LRU cache,
// an architectural interpreter and a generator of attack-free programs.
// None of this shares code with the simulator beyond the ISA data types.

#include <algorithm>
#include <array>
#include <cmath>
#include <list>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "isa.hpp"

namespace oracle {

using transim::Addr;

class LruCache {
 public:
  LruCache(unsigned sets, unsigned ways) : sets_(sets), ways_(ways), lists_(sets) {}

  // Returns hit/miss and updates recency; a miss inserts and may evict.
  bool access(Addr addr) {
    Addr line = addr / 64;
    auto& l = lists_[line % sets_];
    auto it = std::find(l.begin(), l.end(), line);
    if (it != l.end()) {
      l.erase(it);
      l.push_front(line);
      return true;
    }
    l.push_front(line);
    if (l.size() > ways_) l.pop_back();
    return false;
  }

 private:
  unsigned sets_;
  unsigned ways_;
  std::vector<std::list<Addr>> lists_;
};

struct ArchState {
  std::array<std::int64_t, transim::kNumRegs> regs{};
  bool ge = false;
  std::map<Addr, std::int64_t> mem;
  bool halted = false;
};

// Plain sequential execution; no timing, no speculation.
inline ArchState interpret(const transim::Program& p, ArchState s, std::size_t max_steps = 1'000'000) {
  using transim::Opcode;
  Addr pc = p.entry;
  auto val = [&](const transim::Instruction& in, std::size_t i) -> std::int64_t {
    const auto& op = in.operands.at(i);
    if (auto r = std::get_if<transim::Reg>(&op)) return s.regs[r->index];
    if (auto m = std::get_if<transim::Imm>(&op)) return m->value;
    if (auto c = std::get_if<transim::CodeRef>(&op)) return static_cast<std::int64_t>(c->target);
    return 0;
  };
  auto load = [&](Addr a) {
    auto it = s.mem.find(a);
    return it == s.mem.end() ? 0 : it->second;
  };
  for (std::size_t step = 0; step < max_steps && pc < p.size(); ++step) {
    const auto& in = p.instructions[pc];
    Addr next = pc + 1;
    switch (in.opcode) {
      case Opcode::MOVI: s.regs[in.reg(0).index] = val(in, 1); break;
      case Opcode::ADD:
        s.regs[in.reg(0).index] =
            static_cast<std::int64_t>(static_cast<std::uint64_t>(val(in, 1)) + static_cast<std::uint64_t>(val(in, 2)));
        break;
      case Opcode::SHL:
        s.regs[in.reg(0).index] = static_cast<std::int64_t>(static_cast<std::uint64_t>(val(in, 1)) << (val(in, 2) & 63));
        break;
      case Opcode::AND: s.regs[in.reg(0).index] = val(in, 1) & val(in, 2); break;
      case Opcode::CMP: s.ge = val(in, 0) >= val(in, 1); break;
      case Opcode::BGE:
        if (s.ge) next = in.code_target(0);
        break;
      case Opcode::LD: s.regs[in.reg(0).index] = load(static_cast<Addr>(val(in, 1) + in.imm(2))); break;
      case Opcode::ST: s.mem[static_cast<Addr>(val(in, 1) + in.imm(2))] = val(in, 0); break;
      case Opcode::CALL: {
        auto& sp = s.regs[transim::kStackReg];
        sp -= 8;
        s.mem[static_cast<Addr>(sp)] = static_cast<std::int64_t>(pc + 1);
        next = in.code_target(0);
        break;
      }
      case Opcode::RET: {
        auto& sp = s.regs[transim::kStackReg];
        next = static_cast<Addr>(load(static_cast<Addr>(sp)));
        sp += 8;
        break;
      }
      case Opcode::HALT: s.halted = true; return s;
      case Opcode::NOP:
      case Opcode::FENCE:
      case Opcode::FLUSH: break;
      default: return s;  // not part of the attack-free subset
    }
    pc = next;
  }
  return s;
}

struct GenOptions {
  int items = 24;
  int functions = 3;
  bool allow_flush = true;
};

inline std::string fmt_reg(int r) { return "r" + std::to_string(r); }

constexpr Addr kDataBase = 0x2000;
constexpr Addr kStackBase = 0x80000;

// Terminating programs: forward branches, counted loops and an acyclic call
// graph. r13 is the loop counter, r14 the data base, r15 the stack pointer.
inline std::string random_program(std::mt19937_64& rng, const GenOptions& opt = {}) {
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  auto reg = [&] { return fmt_reg(pick(0, 12)); };
  std::string s;
  int label = 0;

  auto simple = [&](std::string& out, int fn_index) {
    switch (pick(0, 9)) {
      case 0:
      case 1: {
        const char* ops[] = {"ADD", "AND", "SHL"};
        int op = pick(0, 2);
        std::string rhs = pick(0, 1) ? reg() : std::to_string(op == 2 ? pick(0, 8) : pick(-64, 64));
        out += std::string("  ") + ops[op] + " " + reg() + ", " + reg() + ", " + rhs + "\n";
        break;
      }
      case 2: out += "  CMP " + reg() + ", " + (pick(0, 1) ? reg() : std::to_string(pick(-8, 8))) + "\n"; break;
      case 3:
      case 4: out += "  LD " + reg() + ", [r14+" + std::to_string(8 * pick(0, 31)) + "]\n"; break;
      case 5:
      case 6: out += "  ST " + reg() + ", [r14+" + std::to_string(8 * pick(0, 31)) + "]\n"; break;
      case 7: {
        // Data-dependent address inside the data region.
        auto t = reg();
        out += "  AND " + t + ", " + reg() + ", 248\n  ADD " + t + ", " + t + ", r14\n";
        out += pick(0, 1) ? "  LD " + reg() + ", [" + t + "+0]\n" : "  ST " + reg() + ", [" + t + "+0]\n";
        break;
      }
      case 8:
        if (fn_index + 1 < opt.functions) {
          out += "  CALL fn_" + std::to_string(pick(fn_index + 1, opt.functions - 1)) + "\n";
          break;
        }
        [[fallthrough]];
      default: {
        int k = pick(0, opt.allow_flush ? 2 : 1);
        if (k == 0) out += "  NOP\n";
        else if (k == 1) out += "  FENCE\n";
        else out += "  FLUSH [r14+" + std::to_string(8 * pick(0, 31)) + "]\n";
      }
    }
  };

  auto block = [&](std::string& out, int fn_index, int items, bool allow_loops) {
    for (int i = 0; i < items; ++i) {
      int kind = pick(0, 9);
      if (kind == 0) {
        int l = label++;
        out += "  CMP " + reg() + ", " + (pick(0, 1) ? reg() : std::to_string(pick(-8, 8))) + "\n";
        out += "  BGE skip_" + std::to_string(l) + "\n";
        for (int k = pick(1, 3); k > 0; --k) simple(out, fn_index);
        out += "skip_" + std::to_string(l) + ":\n";
      } else if (kind == 1 && allow_loops) {
        int l = label++;
        out += "  MOVI r13, " + std::to_string(pick(1, 4)) + "\n";
        out += "loop_" + std::to_string(l) + ":\n";
        for (int k = pick(1, 3); k > 0; --k) simple(out, fn_index);
        out += "  ADD r13, r13, -1\n  CMP r13, 1\n  BGE loop_" + std::to_string(l) + "\n";
      } else {
        simple(out, fn_index);
      }
    }
  };

  s += "entry:\n";
  s += "  MOVI r14, " + std::to_string(kDataBase) + "\n";
  s += "  MOVI r15, " + std::to_string(kStackBase) + "\n";
  for (int r = 0; r <= 12; ++r)
    if (pick(0, 1)) s += "  MOVI " + fmt_reg(r) + ", " + std::to_string(pick(-1000, 1000)) + "\n";
  block(s, -1, opt.items, true);
  s += "  HALT\n";
  for (int f = 0; f < opt.functions; ++f) {
    s += "fn_" + std::to_string(f) + ":\n";
    block(s, f, pick(1, 6), false);
    s += "  RET\n";
  }
  return s;
}

// Two-sided 99% normal-approximation binomial interval for proportion p over n trials.
inline std::pair<double, double> binomial_ci99(double p, double n) {
  double half = 2.5758293035489 * std::sqrt(p * (1 - p) / n);
  return {p - half, p + half};
}

// Exact accuracy of the alternating hit/miss classifier when the reading is
// latency + U, U uniform on the integers of [-a, a], threshold (hit + miss) / 2.
inline double noise_accuracy(std::int64_t hit, std::int64_t miss, std::int64_t a) {
  std::int64_t thr = (hit + miss) / 2;
  double n = static_cast<double>(2 * a + 1);
  std::int64_t hit_wrong = 0, miss_wrong = 0;
  for (std::int64_t u = -a; u <= a; ++u) {
    if (hit + u >= thr) ++hit_wrong;
    if (miss + u < thr) ++miss_wrong;
  }
  return 1.0 - 0.5 * (hit_wrong / n) - 0.5 * (miss_wrong / n);
}

}  // namespace oracle
