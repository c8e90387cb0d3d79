#pragma once

#include <memory>
#include <string>

#include <fmt/format.h>

#include "core.hpp"
#include "oracles.hpp"

namespace oracle {

// Runs the program on the simulated core and on the reference interpreter.
// Returns an empty string when the final architectural states agree.
inline std::string compare_with_reference(const std::string& source, const transim::CpuProfile& profile,
                                          std::uint64_t seed = 1) {
  auto prog = std::make_shared<const transim::Program>(transim::assemble(source));
  auto ref = interpret(*prog, {});
  if (!ref.halted) return "reference did not halt";

  transim::Core core(profile, seed);
  transim::Context ctx(prog);
  transim::RunLimits limits;
  limits.record_trace = false;
  auto r = transim::run(core, ctx, limits);
  if (r.status != transim::RunStatus::Halted) return fmt::format("core stopped with {}", transim::to_string(r.status));

  for (int i = 0; i < transim::kNumRegs; ++i)
    if (ctx.regs[i] != ref.regs[i]) return fmt::format("r{}: core {} reference {}", i, ctx.regs[i], ref.regs[i]);
  if (ctx.flag_ge != ref.ge) return "flag differs";
  for (const auto& [addr, v] : ref.mem)
    if (core.mem().read(addr) != v)
      return fmt::format("mem[0x{:x}]: core {} reference {}", addr, core.mem().read(addr), v);
  for (const auto& [addr, v] : core.mem().contents()) {
    auto it = ref.mem.find(addr);
    std::int64_t want = it == ref.mem.end() ? 0 : it->second;
    if (v != want) return fmt::format("mem[0x{:x}]: core {} reference {}", addr, v, want);
  }
  return {};
}

}  // namespace oracle
