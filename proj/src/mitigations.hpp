#pragma once

#include <optional>
#include <string>
#include <vector>

#include "attacks.hpp"
#include "covert.hpp"

namespace transim {

// Underfill attack against RSB refilling: the attacker trains the BTB for a
// victim return site, then the victim drains the refilled RSB so that the
// return falls back to the BTB. Runs with the profile's mitigations as given.
AttackOutcome demo_refill_bypass(const CpuProfile& profile, const AttackOptions& options = {});
std::string refill_bypass_source(unsigned rsb_size);

struct NoiseEffect {
  Cycle amplitude = 0;
  unsigned trials = 0;
  Cycle threshold = 0;
  double accuracy = 1.0;
};

// Alternating hit/miss trials timed through the noisy counter; the
// classifier calls a hit when the reading is below (L1 + DRAM) / 2.
NoiseEffect pmu_noise_effect(const CpuProfile& profile, Cycle amplitude, unsigned trials, std::uint64_t seed = 0x5eed);

enum class DemoKind { Suite, RefillBypass, PmuNoise };
std::string_view to_string(DemoKind k);
DemoKind parse_demo(std::string_view s);

struct MitigationRow {
  std::string experiment;
  bool baseline = false;   // success without mitigations
  bool mitigated = false;  // success with them
};

struct MitigationReport {
  std::string profile;
  MitigationSet mitigations;
  DemoKind demo = DemoKind::Suite;
  std::vector<MitigationRow> rows;
  std::optional<NoiseEffect> noise;
  bool blocked = false;  // the mitigated runs leaked nothing

  std::string to_json() const;
};

MitigationReport run_mitigation_demo(DemoKind demo, const CpuProfile& profile, const MitigationSet& mitigations,
                                     std::uint64_t seed = 0x5eed, unsigned noise_trials = 1000);

}  // namespace transim
