#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "core.hpp"

namespace transim {

enum class Variant { V1, V3, V3a, V4, Rsb };
enum class WindowTrigger { SpeculativeLoad, CacheMiss, PageFault };
enum class SecretLocation { L1, MainMemory };

std::string_view to_string(Variant v);
std::string_view to_string(WindowTrigger t);
std::string_view to_string(SecretLocation s);
Variant parse_variant(std::string_view s);
WindowTrigger parse_trigger(std::string_view s);
SecretLocation parse_secret_location(std::string_view s);

struct Scenario {
  WindowTrigger trigger = WindowTrigger::CacheMiss;
  SecretLocation secret = SecretLocation::L1;
  friend bool operator==(const Scenario&, const Scenario&) = default;
};

// Data layout shared by every attack program.
namespace layout {
inline constexpr Addr kArray1Size = 0x10000;
inline constexpr Addr kArray1 = 0x20000;
inline constexpr std::int64_t kArray1Length = 16;
inline constexpr Addr kSecret = 0x30040;
inline constexpr Addr kPointer = 0x40000;
inline constexpr Addr kPublic = 0x41000;
inline constexpr Addr kSlow = 0x50000;
inline constexpr Addr kProbe = 0x60000;
inline constexpr Addr kOracle = 0x100000;
inline constexpr unsigned kOracleLines = 256;
inline constexpr Addr kStackTop = 0x800000;
inline constexpr Addr kKernel = 0x900000;
inline constexpr Addr kEvictionBase = 0x1000'0000;
inline constexpr std::size_t kEvictionBytes = 64u << 20;
inline constexpr std::uint32_t kTestSysreg = 3;
}  // namespace layout

struct ProbeResult {
  std::vector<Cycle> latencies;
  std::vector<bool> hits;

  std::vector<unsigned> hit_lines() const;
};

// Flush+Reload phases. Flushing runs in user mode and throws
// ErrorCode::PrivilegedFlush when that mitigation is active.
void flush_lines(Core& core, Addr base, unsigned count);
ProbeResult reload_lines(Core& core, Addr base, unsigned count, Cycle threshold);
ProbeResult flush_reload(Core& core, Addr base, unsigned count, Cycle threshold, const std::function<void()>& victim);
// Hit threshold between an L2 hit and a DRAM access.
Cycle default_threshold(const Latencies& lat);

// Pushes target out of both cache levels the way an unprivileged attacker
// on this profile can: flush, the eviction pattern or a full sweep.
void attacker_evict(Core& core, Addr target);

struct AttackOptions {
  std::vector<std::uint8_t> secret = {'R', 'S', 'B', '-', 'l', 'e', 'a', 'k'};
  std::int64_t sysreg_value = 0x42;
  std::uint64_t seed = 0x5eed;
  bool record_trace = false;
};

struct AttackOutcome {
  Variant variant = Variant::V1;
  std::string profile;
  Scenario scenario;
  bool success = false;
  std::vector<std::optional<std::uint8_t>> recovered;
  std::vector<std::uint8_t> expected;
  std::vector<std::vector<Cycle>> probe_latencies;  // one row per leaked byte
  std::uint64_t squashes = 0;
  std::uint64_t mispredicts = 0;
  std::size_t transient_lines = 0;
  std::string error;  // set when the attack aborted (e.g. flush rejected)
  Trace trace;        // last malicious run, when recording was requested

  std::string recovered_hex() const;  // "??" for unrecovered bytes
  std::string to_json() const;
};

AttackOutcome run_spectre_v1(const CpuProfile& profile, const Scenario& scenario, const AttackOptions& options = {});
AttackOutcome run_spectre_rsb(const CpuProfile& profile, const Scenario& scenario, const AttackOptions& options = {});
AttackOutcome run_meltdown_v3(const CpuProfile& profile, const AttackOptions& options = {});
AttackOutcome run_meltdown_v3a(const CpuProfile& profile, const AttackOptions& options = {});
AttackOutcome run_spectre_v4(const CpuProfile& profile, const AttackOptions& options = {});
bool speculative_load_test(const CpuProfile& profile, std::uint64_t seed = 0x5eed);

// Dispatches on variant; the speculative-load trigger runs the single-load
// probe regardless of variant. SpectreRSB and V3a reject page-fault.
AttackOutcome run_attack(Variant variant, const CpuProfile& profile, const Scenario& scenario,
                         const AttackOptions& options = {});

// Attack program sources, exposed for tests and the CLI's asm command.
std::string_view spectre_v1_source();
std::string_view speculative_load_source();
std::string_view spectre_rsb_source();
std::string_view meltdown_v3a_source();
std::string_view meltdown_v3_source();
std::string_view spectre_v4_source();

}  // namespace transim
