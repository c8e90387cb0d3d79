#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "attacks.hpp"
#include "covert.hpp"
#include "mitigations.hpp"

namespace transim {

enum class ExperimentKind { Attack, Covert, Sweep, Matrix, MitigationDemo };
enum class OutputFormat { Json, Csv, Table };

std::string_view to_string(ExperimentKind k);
std::string_view to_string(OutputFormat f);
ExperimentKind parse_experiment(std::string_view s);
OutputFormat parse_format(std::string_view s);

inline constexpr std::uint64_t kDefaultSeed = 0x5eed;
inline constexpr std::size_t kSweepMessageBytes = 1024;
inline constexpr const char* kSeedEnvVar = "TRANSIENT_SIM_SEED";

// TRANSIENT_SIM_SEED when set (decimal or 0x hex), else kDefaultSeed.
std::uint64_t default_seed();

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::Attack;
  std::string profile = "intel_i7";
  nlohmann::json profile_overrides = nlohmann::json::object();
  std::vector<std::string> profiles;  // matrix only; empty means every built-in profile

  Variant variant = Variant::V1;
  Scenario scenario;
  std::optional<std::vector<std::uint8_t>> secret;

  // Defaults: "HI" for covert, kSweepMessageBytes seeded random bytes for sweep.
  std::optional<std::vector<std::uint8_t>> message;
  ChannelConfig channel;
  unsigned bits_min = 1;
  unsigned bits_max = kMaxBitsPerCs;

  MitigationSet mitigations;
  DemoKind demo = DemoKind::Suite;
  unsigned noise_trials = 1000;

  std::uint64_t seed = kDefaultSeed;
  OutputFormat format = OutputFormat::Json;

  std::vector<std::uint8_t> resolved_message() const;

  // Fresh config with the environment seed applied.
  static ExperimentConfig defaults();

  // Sets one key from a JSON value; unknown keys and bad values throw.
  void set(const std::string& key, const nlohmann::json& value);
  // Cross-field checks; also resolves every referenced profile.
  void validate() const;

  // Built-in profile plus overrides, without mitigations folded in.
  CpuProfile base_profile(const std::string& name) const;
  CpuProfile base_profile() const { return base_profile(profile); }

  nlohmann::json to_json() const;  // fully resolved, including the profile
};

// Keys are applied on top of defaults(), then validated.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

nlohmann::json profile_to_json(const CpuProfile& p);
void apply_profile_overrides(CpuProfile& p, const nlohmann::json& overrides);
nlohmann::json profiles_json();

// Matrix cell columns, in table order.
const std::vector<std::string>& matrix_columns();

struct MatrixDiff {
  std::string profile;
  std::string column;
  std::optional<bool> expected;
  std::optional<bool> actual;
};

struct SuiteReport {
  std::vector<std::string> profiles;
  // profile -> column -> result; nullopt marks an undefined scenario.
  std::map<std::string, std::map<std::string, std::optional<bool>>> cells;
  std::vector<MatrixDiff> diff;

  bool passed() const { return diff.empty(); }
  nlohmann::json to_json() const;
  std::string to_csv() const;
  std::string to_table() const;
};

// Golden cells for the built-in profiles.
const std::map<std::string, std::map<std::string, std::optional<bool>>>& golden_matrix();

SuiteReport run_matrix(const std::vector<CpuProfile>& profiles, std::uint64_t seed);

struct Report {
  ExperimentKind kind = ExperimentKind::Attack;
  bool passed = false;
  nlohmann::json data;
  std::string csv;
  std::string table;
  std::string latency_trace_csv;  // empty unless requested

  std::string emit(OutputFormat format) const;
};

Report run_experiment(const ExperimentConfig& config);

std::vector<std::uint8_t> parse_hex(std::string_view hex);
std::string to_hex(const std::vector<std::uint8_t>& bytes);

}  // namespace transim
