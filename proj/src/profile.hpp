#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "memory.hpp"

namespace transim {

enum class Pipeline { InOrder, OutOfOrder };
enum class RsbUnderflow { StopPredicting, RingBuffer, SwitchToBtb };
enum class SquashPolicy { CancelInflightFills, KeepInflightFills };
enum class ExceptionPolicy { DeferredForwardValue, DeferredForwardZero };

std::string_view to_string(Pipeline v);
std::string_view to_string(RsbUnderflow v);
std::string_view to_string(SquashPolicy v);
std::string_view to_string(ExceptionPolicy v);
Pipeline parse_pipeline(std::string_view s);
RsbUnderflow parse_rsb_underflow(std::string_view s);
SquashPolicy parse_squash_policy(std::string_view s);
ExceptionPolicy parse_exception_policy(std::string_view s);

struct MitigationSet {
  bool privileged_flush = false;
  Cycle pmu_noise_amplitude = 0;
  bool rsb_flush_on_cs = false;
  bool rsb_refill_on_cs = false;
  bool btb_fallback_disabled = false;

  bool empty() const { return *this == MitigationSet{}; }
  void check() const;  // flush and refill on context switch are exclusive
  friend bool operator==(const MitigationSet&, const MitigationSet&) = default;
};

enum class EvictionMethod { Flush, Pattern, Sweep };

struct CpuProfile {
  std::string name;
  Pipeline pipeline = Pipeline::OutOfOrder;
  unsigned rsb_size = 16;
  RsbUnderflow rsb_underflow = RsbUnderflow::StopPredicting;
  SquashPolicy squash_policy = SquashPolicy::KeepInflightFills;
  Cycle branch_resolve_extra = 20;
  Cycle return_resolve_extra = 0;
  bool stl_speculation = false;
  ExceptionPolicy exception_policy = ExceptionPolicy::DeferredForwardZero;
  bool sysreg_transient_forward = false;
  Latencies latencies;
  CacheGeometry l1;
  CacheGeometry l2;
  Cycle counter_resolution = 1;
  // Eviction pattern (N, A, D); absent means no working pattern is known.
  std::optional<EvictionParams> eviction;
  // Whether user code has an unprivileged flush instruction (x86 clflush).
  bool user_flush = false;
  MitigationSet mitigations;

  void check() const;
  MemoryConfig memory_config(std::uint64_t seed) const;
  // How the attacker pushes a line out of the cache from user mode.
  EvictionMethod eviction_method() const;
  bool out_of_order() const { return pipeline == Pipeline::OutOfOrder; }
};

inline constexpr unsigned kMinRsbSize = 4;
inline constexpr unsigned kMaxRsbSize = 32;

// Built-in profiles in table order: cortex_a53, cortex_a8, cortex_a9,
// cortex_a72, intel_i7.
const std::vector<CpuProfile>& builtin_profiles();
const CpuProfile& builtin_profile(std::string_view name);
std::string_view display_name(std::string_view profile_name);

// Returns the profile with the mitigation flags folded in.
CpuProfile apply(const CpuProfile& profile, const MitigationSet& mitigations);

}  // namespace transim
