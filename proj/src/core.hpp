#pragma once

// The speculative core. Instructions are processed in fetch order; each one
// gets fetch/issue/complete/retire cycles from a simple event model, and a
// mispredicted or faulting instruction forks a transient walk down the
// predicted path that ends at the resolve cycle.

#include <array>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "isa.hpp"
#include "memory.hpp"
#include "predictors.hpp"
#include "profile.hpp"

namespace transim {

// Reserved code addresses outside every program image.
inline constexpr Addr kBenignGadgetBase = 0x7000'0000;
inline constexpr unsigned kBenignGadgetNops = 32;
inline constexpr Addr kInterloperBase = 0x7800'0000;  // never holds code

enum class EventKind { Fetch, Execute, Retire, Squash, Fill, Fault, Predict };
std::string_view to_string(EventKind kind);

struct TraceEvent {
  Cycle cycle;
  EventKind kind;
  std::uint64_t seq;
  Addr pc;
  bool transient;
  std::string detail;
};

struct Trace {
  std::vector<TraceEvent> events;
  std::set<Addr> transient_set;  // lines whose transient fill survived the squash

  std::size_t count(EventKind kind) const;
  std::string to_log() const;   // one `cycle kind detail` line per event
  std::string to_json() const;  // JSON array of events
};

struct Context {
  std::shared_ptr<const Program> program;
  std::array<std::int64_t, kNumRegs> regs{};
  bool flag_ge = false;
  Addr pc = 0;
  Privilege privilege = Privilege::User;
  std::map<std::uint32_t, std::int64_t> sysregs;
  std::optional<Addr> recovery_pc;

  Context() = default;
  explicit Context(std::shared_ptr<const Program> p) : program(std::move(p)), pc(program->entry) {}
};

class Core {
 public:
  explicit Core(const CpuProfile& profile, std::uint64_t seed = 0x5eed);

  const CpuProfile& profile() const { return profile_; }
  MemorySystem& mem() { return mem_; }
  const MemorySystem& mem() const { return mem_; }
  Pht& pht() { return pht_; }
  Btb& btb() { return btb_; }
  Rsb& rsb() { return rsb_; }
  const Rsb& rsb() const { return rsb_; }
  Cycle now() const { return mem_.counter().current(); }
  void advance(Cycle n) { mem_.counter().advance(n); }

  // Hook the scheduler calls between contexts; applies the RSB mitigations.
  void on_context_switch();
  RsbUnderflow effective_underflow() const;

  // Lines with a fill still outstanding, keyed by line address.
  std::map<Addr, Cycle>& inflight() { return inflight_; }

 private:
  CpuProfile profile_;
  MemorySystem mem_;
  Pht pht_;
  Btb btb_;
  Rsb rsb_;
  std::map<Addr, Cycle> inflight_;
};

struct MachineState {
  Core core;
  Context context;
};

enum class RunStatus { Halted, Yielded, CycleLimit, UnhandledFault, InvalidPc };
std::string_view to_string(RunStatus s);

struct RunLimits {
  Cycle max_cycles = 1'000'000;
  bool record_trace = true;
};

struct RunResult {
  RunStatus status = RunStatus::Halted;
  Trace trace;
  Cycle start = 0;
  Cycle end = 0;
  std::uint64_t retired = 0;
  std::uint64_t squashed = 0;
  std::uint64_t mispredicts = 0;
  std::string fault;  // description of the unhandled fault, if any

  Cycle cycles() const { return end - start; }
};

// Runs ctx from ctx.pc until HALT, YIELD, a fatal condition or the cycle
// limit. Architectural state lands in ctx; the core keeps caches, predictors
// and the cycle counter (advanced to the last retire).
RunResult run(Core& core, Context& ctx, const RunLimits& limits = {});

}  // namespace transim
