#include "profile.hpp"

#include <fmt/format.h>

namespace transim {

std::string_view to_string(Pipeline v) { return v == Pipeline::InOrder ? "in-order" : "out-of-order"; }

std::string_view to_string(RsbUnderflow v) {
  switch (v) {
    case RsbUnderflow::StopPredicting: return "stop-predicting";
    case RsbUnderflow::RingBuffer: return "ring-buffer";
    case RsbUnderflow::SwitchToBtb: return "switch-to-btb";
  }
  return "?";
}

std::string_view to_string(SquashPolicy v) {
  return v == SquashPolicy::CancelInflightFills ? "cancel-inflight-fills" : "keep-inflight-fills";
}

std::string_view to_string(ExceptionPolicy v) {
  return v == ExceptionPolicy::DeferredForwardValue ? "deferred-forward-value" : "deferred-forward-zero";
}

namespace {

[[noreturn]] void bad_enum(std::string_view what, std::string_view s) {
  throw Error(ErrorCode::Config, fmt::format("invalid {}: '{}'", what, s));
}

}  // namespace

Pipeline parse_pipeline(std::string_view s) {
  if (s == "in-order") return Pipeline::InOrder;
  if (s == "out-of-order") return Pipeline::OutOfOrder;
  bad_enum("pipeline", s);
}

RsbUnderflow parse_rsb_underflow(std::string_view s) {
  if (s == "stop-predicting") return RsbUnderflow::StopPredicting;
  if (s == "ring-buffer") return RsbUnderflow::RingBuffer;
  if (s == "switch-to-btb") return RsbUnderflow::SwitchToBtb;
  bad_enum("rsb_underflow", s);
}

SquashPolicy parse_squash_policy(std::string_view s) {
  if (s == "cancel-inflight-fills") return SquashPolicy::CancelInflightFills;
  if (s == "keep-inflight-fills") return SquashPolicy::KeepInflightFills;
  bad_enum("squash_policy", s);
}

ExceptionPolicy parse_exception_policy(std::string_view s) {
  if (s == "deferred-forward-value") return ExceptionPolicy::DeferredForwardValue;
  if (s == "deferred-forward-zero") return ExceptionPolicy::DeferredForwardZero;
  bad_enum("exception_policy", s);
}

void MitigationSet::check() const {
  if (rsb_flush_on_cs && rsb_refill_on_cs)
    throw Error(ErrorCode::Config, "mitigations rsb_flush_on_cs and rsb_refill_on_cs are mutually exclusive");
  if (pmu_noise_amplitude < 0) throw Error(ErrorCode::Config, "pmu_noise_amplitude must be >= 0");
}

void CpuProfile::check() const {
  if (rsb_size < kMinRsbSize || rsb_size > kMaxRsbSize)
    throw Error(ErrorCode::Config,
                fmt::format("rsb_size {} out of range [{}, {}]", rsb_size, kMinRsbSize, kMaxRsbSize));
  if (branch_resolve_extra < 0 || return_resolve_extra < 0)
    throw Error(ErrorCode::Config, "resolve extras must be >= 0");
  if (counter_resolution < 1) throw Error(ErrorCode::Config, "counter_resolution must be >= 1");
  latencies.check();
  l1.check();
  l2.check();
  mitigations.check();
}

MemoryConfig CpuProfile::memory_config(std::uint64_t seed) const {
  MemoryConfig c;
  c.l1 = l1;
  c.l2 = l2;
  c.latencies = latencies;
  c.counter_resolution = counter_resolution;
  c.noise_amplitude = mitigations.pmu_noise_amplitude;
  c.seed = seed;
  return c;
}

EvictionMethod CpuProfile::eviction_method() const {
  if (user_flush && !mitigations.privileged_flush) return EvictionMethod::Flush;
  if (eviction) return EvictionMethod::Pattern;
  return EvictionMethod::Sweep;
}

namespace {

std::vector<CpuProfile> make_profiles() {
  std::vector<CpuProfile> out;

  CpuProfile a53;
  a53.name = "cortex_a53";
  a53.pipeline = Pipeline::InOrder;
  a53.rsb_size = 8;
  a53.squash_policy = SquashPolicy::CancelInflightFills;
  a53.l1 = {128, 4};
  a53.l2 = {512, 16};
  a53.eviction = EvictionParams{21, 2, 5};
  out.push_back(a53);

  CpuProfile a8;
  a8.name = "cortex_a8";
  a8.pipeline = Pipeline::InOrder;
  a8.rsb_size = 8;
  a8.squash_policy = SquashPolicy::CancelInflightFills;
  a8.l1 = {128, 4};
  a8.l2 = {512, 8};
  out.push_back(a8);

  CpuProfile a9;
  a9.name = "cortex_a9";
  a9.rsb_size = 8;
  a9.squash_policy = SquashPolicy::CancelInflightFills;
  a9.branch_resolve_extra = 5;
  a9.return_resolve_extra = 0;
  a9.l1 = {128, 4};
  a9.l2 = {1024, 8};
  a9.eviction = EvictionParams{10, 3, 6};
  out.push_back(a9);

  CpuProfile a72;
  a72.name = "cortex_a72";
  a72.rsb_size = 16;
  a72.rsb_underflow = RsbUnderflow::StopPredicting;
  a72.squash_policy = SquashPolicy::KeepInflightFills;
  a72.branch_resolve_extra = 20;
  a72.return_resolve_extra = 0;
  a72.stl_speculation = true;
  a72.exception_policy = ExceptionPolicy::DeferredForwardZero;
  a72.sysreg_transient_forward = true;
  a72.l1 = {256, 2};
  a72.l2 = {1024, 16};
  a72.eviction = EvictionParams{7, 1, 16};
  out.push_back(a72);

  CpuProfile i7;
  i7.name = "intel_i7";
  i7.rsb_size = 16;
  i7.rsb_underflow = RsbUnderflow::SwitchToBtb;
  i7.squash_policy = SquashPolicy::KeepInflightFills;
  i7.branch_resolve_extra = 20;
  i7.return_resolve_extra = 20;
  i7.stl_speculation = true;
  i7.exception_policy = ExceptionPolicy::DeferredForwardValue;
  i7.sysreg_transient_forward = true;
  i7.l1 = {64, 8};
  i7.l2 = {512, 8};
  i7.user_flush = true;
  out.push_back(i7);

  for (auto& p : out) p.check();
  return out;
}

}  // namespace

const std::vector<CpuProfile>& builtin_profiles() {
  static const std::vector<CpuProfile> profiles = make_profiles();
  return profiles;
}

const CpuProfile& builtin_profile(std::string_view name) {
  for (const auto& p : builtin_profiles())
    if (p.name == name) return p;
  throw Error(ErrorCode::UnknownProfile, fmt::format("unknown profile: {}", name));
}

std::string_view display_name(std::string_view profile_name) {
  if (profile_name == "cortex_a53") return "Cortex-A53";
  if (profile_name == "cortex_a8") return "Cortex-A8";
  if (profile_name == "cortex_a9") return "Cortex-A9";
  if (profile_name == "cortex_a72") return "Cortex-A72";
  if (profile_name == "intel_i7") return "Core i7";
  return profile_name;
}

CpuProfile apply(const CpuProfile& profile, const MitigationSet& mitigations) {
  mitigations.check();
  CpuProfile out = profile;
  out.mitigations = mitigations;
  return out;
}

}  // namespace transim
