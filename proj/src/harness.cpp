#include "harness.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

#include <fmt/format.h>

namespace transim {

using nlohmann::json;

std::string_view to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::Attack: return "attack";
    case ExperimentKind::Covert: return "covert";
    case ExperimentKind::Sweep: return "sweep";
    case ExperimentKind::Matrix: return "matrix";
    case ExperimentKind::MitigationDemo: return "mitigation-demo";
  }
  return "?";
}

std::string_view to_string(OutputFormat f) {
  switch (f) {
    case OutputFormat::Json: return "json";
    case OutputFormat::Csv: return "csv";
    case OutputFormat::Table: return "table";
  }
  return "?";
}

ExperimentKind parse_experiment(std::string_view s) {
  for (auto k : {ExperimentKind::Attack, ExperimentKind::Covert, ExperimentKind::Sweep, ExperimentKind::Matrix,
                 ExperimentKind::MitigationDemo})
    if (to_string(k) == s) return k;
  throw Error(ErrorCode::Config, fmt::format("unknown experiment kind: {}", s));
}

OutputFormat parse_format(std::string_view s) {
  for (auto f : {OutputFormat::Json, OutputFormat::Csv, OutputFormat::Table})
    if (to_string(f) == s) return f;
  throw Error(ErrorCode::Config, fmt::format("unknown output format: {}", s));
}

namespace {

std::uint64_t parse_seed_text(const std::string& text, std::string_view origin) {
  try {
    std::size_t used = 0;
    auto v = std::stoull(text, &used, 0);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error(ErrorCode::Config, fmt::format("{}: seed '{}' is not an unsigned integer", origin, text));
}

std::string_view to_string(EvictionMethod m) {
  switch (m) {
    case EvictionMethod::Flush: return "flush";
    case EvictionMethod::Pattern: return "pattern";
    case EvictionMethod::Sweep: return "sweep";
  }
  return "?";
}

}  // namespace

std::uint64_t default_seed() {
  const char* env = std::getenv(kSeedEnvVar);
  if (!env || !*env) return kDefaultSeed;
  return parse_seed_text(env, kSeedEnvVar);
}

std::vector<std::uint8_t> parse_hex(std::string_view hex) {
  if (hex.starts_with("0x") || hex.starts_with("0X")) hex.remove_prefix(2);
  if (hex.size() % 2 != 0) throw Error(ErrorCode::InvalidArgument, "hex string has an odd number of digits");
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  std::vector<std::uint8_t> out;
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    int hi = nibble(hex[i]), lo = nibble(hex[i + 1]);
    if (hi < 0 || lo < 0) throw Error(ErrorCode::InvalidArgument, fmt::format("invalid hex digit in '{}'", hex));
    out.push_back(static_cast<std::uint8_t>(hi * 16 + lo));
  }
  return out;
}

std::string to_hex(const std::vector<std::uint8_t>& bytes) {
  std::string out;
  for (auto b : bytes) out += fmt::format("{:02x}", b);
  return out;
}

// ---- profiles ----

json profile_to_json(const CpuProfile& p) {
  json j;
  j["name"] = p.name;
  j["display_name"] = std::string(display_name(p.name));
  j["pipeline"] = to_string(p.pipeline);
  j["rsb_size"] = p.rsb_size;
  j["rsb_underflow"] = to_string(p.rsb_underflow);
  j["squash_policy"] = to_string(p.squash_policy);
  j["branch_resolve_extra"] = p.branch_resolve_extra;
  j["return_resolve_extra"] = p.return_resolve_extra;
  j["stl_speculation"] = p.stl_speculation;
  j["exception_policy"] = to_string(p.exception_policy);
  j["sysreg_transient_forward"] = p.sysreg_transient_forward;
  j["l1_latency"] = p.latencies.l1;
  j["l2_latency"] = p.latencies.l2;
  j["dram_latency"] = p.latencies.dram;
  j["page_fault_latency"] = p.latencies.page_fault;
  j["l1_sets"] = p.l1.sets;
  j["l1_ways"] = p.l1.ways;
  j["l2_sets"] = p.l2.sets;
  j["l2_ways"] = p.l2.ways;
  j["counter_resolution"] = p.counter_resolution;
  if (p.eviction)
    j["eviction"] = {p.eviction->loop_length, p.eviction->shift_offset, p.eviction->accesses_per_iter};
  else
    j["eviction"] = nullptr;
  j["user_flush"] = p.user_flush;
  j["eviction_method"] = to_string(p.eviction_method());
  return j;
}

void apply_profile_overrides(CpuProfile& p, const json& overrides) {
  if (!overrides.is_object()) throw Error(ErrorCode::Config, "profile overrides must be an object");
  for (const auto& [key, v] : overrides.items()) {
    try {
      if (key == "name") p.name = v.get<std::string>();
      else if (key == "pipeline") p.pipeline = parse_pipeline(v.get<std::string>());
      else if (key == "rsb_size") p.rsb_size = v.get<unsigned>();
      else if (key == "rsb_underflow") p.rsb_underflow = parse_rsb_underflow(v.get<std::string>());
      else if (key == "squash_policy") p.squash_policy = parse_squash_policy(v.get<std::string>());
      else if (key == "branch_resolve_extra") p.branch_resolve_extra = v.get<Cycle>();
      else if (key == "return_resolve_extra") p.return_resolve_extra = v.get<Cycle>();
      else if (key == "stl_speculation") p.stl_speculation = v.get<bool>();
      else if (key == "exception_policy") p.exception_policy = parse_exception_policy(v.get<std::string>());
      else if (key == "sysreg_transient_forward") p.sysreg_transient_forward = v.get<bool>();
      else if (key == "l1_latency") p.latencies.l1 = v.get<Cycle>();
      else if (key == "l2_latency") p.latencies.l2 = v.get<Cycle>();
      else if (key == "dram_latency") p.latencies.dram = v.get<Cycle>();
      else if (key == "page_fault_latency") p.latencies.page_fault = v.get<Cycle>();
      else if (key == "l1_sets") p.l1.sets = v.get<unsigned>();
      else if (key == "l1_ways") p.l1.ways = v.get<unsigned>();
      else if (key == "l2_sets") p.l2.sets = v.get<unsigned>();
      else if (key == "l2_ways") p.l2.ways = v.get<unsigned>();
      else if (key == "counter_resolution") p.counter_resolution = v.get<Cycle>();
      else if (key == "user_flush") p.user_flush = v.get<bool>();
      else if (key == "eviction") {
        if (v.is_null()) {
          p.eviction.reset();
        } else {
          auto nad = v.get<std::vector<unsigned>>();
          if (nad.size() != 3) throw Error(ErrorCode::Config, "eviction must be [N, A, D]");
          p.eviction = EvictionParams{nad[0], nad[1], nad[2]};
        }
      } else
        throw Error(ErrorCode::Config, fmt::format("unknown profile key: {}", key));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::Config, fmt::format("profile key {}: {}", key, e.what()));
    } catch (const Error& e) {
      if (e.code() == ErrorCode::Config) throw;
      throw Error(ErrorCode::Config, fmt::format("profile key {}: {}", key, e.what()));
    }
  }
}

json profiles_json() {
  json out = json::array();
  for (const auto& p : builtin_profiles()) out.push_back(profile_to_json(p));
  return out;
}

// ---- config ----

ExperimentConfig ExperimentConfig::defaults() {
  ExperimentConfig c;
  c.seed = default_seed();
  c.channel.seed = c.seed;
  return c;
}

void ExperimentConfig::set(const std::string& key, const json& v) {
  auto hex_of = [&](const json& x) { return parse_hex(x.get<std::string>()); };
  try {
    if (key == "experiment") experiment = parse_experiment(v.get<std::string>());
    else if (key == "profile") {
      if (v.is_string()) {
        profile = v.get<std::string>();
      } else if (v.is_object()) {
        json rest = v;
        if (!rest.contains("base")) throw Error(ErrorCode::Config, "inline profile needs a 'base' profile name");
        profile = rest["base"].get<std::string>();
        rest.erase("base");
        profile_overrides.update(rest);
      } else {
        throw Error(ErrorCode::Config, "profile must be a name or an object");
      }
    } else if (key == "profile_overrides" || key == "overrides") {
      if (!v.is_object()) throw Error(ErrorCode::Config, "profile_overrides must be an object");
      profile_overrides.update(v);
    } else if (key == "profiles") profiles = v.get<std::vector<std::string>>();
    else if (key == "variant") variant = parse_variant(v.get<std::string>());
    else if (key == "scenario") scenario.trigger = parse_trigger(v.get<std::string>());
    else if (key == "secret_loc") scenario.secret = parse_secret_location(v.get<std::string>());
    else if (key == "secret") secret = hex_of(v);
    else if (key == "message") message = hex_of(v);
    else if (key == "bits") channel.bits_per_cs = v.get<unsigned>();
    else if (key == "bits_min") bits_min = v.get<unsigned>();
    else if (key == "bits_max") bits_max = v.get<unsigned>();
    else if (key == "bits_range") {
      auto r = v.get<std::vector<unsigned>>();
      if (r.size() != 2) throw Error(ErrorCode::Config, "bits_range must be [min, max]");
      bits_min = r[0];
      bits_max = r[1];
    } else if (key == "noise") channel.noise_probability = v.get<double>();
    else if (key == "context_switch_cost") channel.context_switch_cost = v.get<Cycle>();
    else if (key == "probe_cost_per_line") channel.probe_cost_per_line = v.get<Cycle>();
    else if (key == "rsb_fill_depth") {
      if (v.is_null())
        channel.rsb_fill_depth.reset();
      else
        channel.rsb_fill_depth = v.get<unsigned>();
    } else if (key == "receiver_shift") channel.receiver_shift = v.get<unsigned>();
    else if (key == "emit_latency_trace") channel.emit_latency_trace = v.get<bool>();
    else if (key == "mitigations") {
      if (!v.is_object()) throw Error(ErrorCode::Config, "mitigations must be an object");
      for (const auto& [flag, fv] : v.items()) {
        if (flag == "privileged_flush") mitigations.privileged_flush = fv.get<bool>();
        else if (flag == "pmu_noise_amplitude") mitigations.pmu_noise_amplitude = fv.get<Cycle>();
        else if (flag == "rsb_flush_on_cs") mitigations.rsb_flush_on_cs = fv.get<bool>();
        else if (flag == "rsb_refill_on_cs") mitigations.rsb_refill_on_cs = fv.get<bool>();
        else if (flag == "btb_fallback_disabled") mitigations.btb_fallback_disabled = fv.get<bool>();
        else throw Error(ErrorCode::Config, fmt::format("unknown mitigation: {}", flag));
      }
    } else if (key == "demo") demo = parse_demo(v.get<std::string>());
    else if (key == "noise_trials") noise_trials = v.get<unsigned>();
    else if (key == "seed") {
      seed = v.is_string() ? parse_seed_text(v.get<std::string>(), "seed") : v.get<std::uint64_t>();
      channel.seed = seed;
    } else if (key == "format") format = parse_format(v.get<std::string>());
    else
      throw Error(ErrorCode::Config, fmt::format("unknown config key: {}", key));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Config, fmt::format("config key {}: {}", key, e.what()));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Config || e.code() == ErrorCode::UnknownProfile) throw;
    throw Error(ErrorCode::Config, fmt::format("config key {}: {}", key, e.what()));
  }
}

std::vector<std::uint8_t> ExperimentConfig::resolved_message() const {
  if (message) return *message;
  if (experiment != ExperimentKind::Sweep) return {0x48, 0x49};
  std::mt19937_64 rng(seed);
  std::vector<std::uint8_t> out(kSweepMessageBytes);
  for (auto& b : out) b = static_cast<std::uint8_t>(rng());
  return out;
}

CpuProfile ExperimentConfig::base_profile(const std::string& name) const {
  CpuProfile p = builtin_profile(name);
  apply_profile_overrides(p, profile_overrides);
  p.check();
  return p;
}

void ExperimentConfig::validate() const {
  base_profile();
  for (const auto& name : profiles) base_profile(name);
  mitigations.check();
  channel.check();
  if (bits_min < 1 || bits_max > kMaxBitsPerCs || bits_min > bits_max)
    throw Error(ErrorCode::Config,
                fmt::format("bits range [{}, {}] invalid; must lie in [1, {}]", bits_min, bits_max, kMaxBitsPerCs));
  if (secret && secret->empty()) throw Error(ErrorCode::Config, "secret must not be empty");
  if (message && message->empty()) throw Error(ErrorCode::Config, "message must not be empty");
  if (noise_trials < 100) throw Error(ErrorCode::Config, "noise_trials must be >= 100");
}

json ExperimentConfig::to_json() const {
  json j;
  j["experiment"] = to_string(experiment);
  j["profile"] = profile_to_json(apply(base_profile(), mitigations));
  j["profile_overrides"] = profile_overrides;
  j["profiles"] = profiles;
  j["variant"] = to_string(variant);
  j["scenario"] = to_string(scenario.trigger);
  j["secret_loc"] = to_string(scenario.secret);
  j["secret"] = secret ? json(to_hex(*secret)) : json(to_hex(AttackOptions{}.secret));
  j["message"] = to_hex(resolved_message());
  j["bits"] = channel.bits_per_cs;
  j["bits_min"] = bits_min;
  j["bits_max"] = bits_max;
  j["noise"] = channel.noise_probability;
  j["context_switch_cost"] = channel.context_switch_cost;
  j["probe_cost_per_line"] = channel.probe_cost_per_line;
  j["rsb_fill_depth"] = channel.rsb_fill_depth ? json(*channel.rsb_fill_depth) : json(nullptr);
  j["receiver_shift"] = channel.receiver_shift;
  j["emit_latency_trace"] = channel.emit_latency_trace;
  j["mitigations"] = {{"privileged_flush", mitigations.privileged_flush},
                      {"pmu_noise_amplitude", mitigations.pmu_noise_amplitude},
                      {"rsb_flush_on_cs", mitigations.rsb_flush_on_cs},
                      {"rsb_refill_on_cs", mitigations.rsb_refill_on_cs},
                      {"btb_fallback_disabled", mitigations.btb_fallback_disabled}};
  j["demo"] = to_string(demo);
  j["noise_trials"] = noise_trials;
  j["seed"] = seed;
  j["format"] = to_string(format);
  return j;
}

ExperimentConfig parse_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::Parse, fmt::format("config parse error at byte {}: {}", e.byte, e.what()));
  }
  if (!doc.is_object()) throw Error(ErrorCode::Parse, "config must be a JSON object");
  auto cfg = ExperimentConfig::defaults();
  for (const auto& [key, v] : doc.items()) cfg.set(key, v);
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::InvalidArgument, fmt::format("cannot open config file {}", path));
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const Error& e) {
    throw Error(e.code(), fmt::format("{}: {}", path, e.what()));
  }
}

// ---- matrix ----

const std::vector<std::string>& matrix_columns() {
  static const std::vector<std::string> cols = {
      "specload",          "v1.l1.cachemiss",    "v1.l1.pagefault",    "v1.dram.cachemiss",
      "v1.dram.pagefault", "rsb.l1.cachemiss",   "rsb.l1.pagefault",   "rsb.dram.cachemiss",
      "rsb.dram.pagefault", "v3",                "v3a",                "v4"};
  return cols;
}

const std::map<std::string, std::map<std::string, std::optional<bool>>>& golden_matrix() {
  // Columns as in matrix_columns(): speculative load | V1 L1 CM, L1 PF,
  // DRAM CM, DRAM PF | RSB likewise | V3 V3a V4.
  static const auto golden = [] {
    const std::vector<std::pair<std::string, std::string>> rows = {
        {"cortex_a53", "N NNNN N-N- NNN"},
        {"cortex_a8", "N NNNN N-N- NNN"},
        {"cortex_a9", "Y NYNY N-N- NNN"},
        {"cortex_a72", "Y YYYY Y-N- NYY"},
        {"intel_i7", "Y YYYY Y-Y- YYY"},
    };
    std::map<std::string, std::map<std::string, std::optional<bool>>> out;
    for (const auto& [name, cells] : rows) {
      std::size_t col = 0;
      for (char c : cells) {
        if (c == ' ') continue;
        std::optional<bool> v;
        if (c != '-') v = c == 'Y';
        out[name][matrix_columns().at(col++)] = v;
      }
    }
    return out;
  }();
  return golden;
}

namespace {

std::string mark(const std::optional<bool>& v) { return v ? (*v ? "Y" : "N") : "-"; }

json cell_json(const std::optional<bool>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

SuiteReport run_matrix(const std::vector<CpuProfile>& profiles, std::uint64_t seed) {
  SuiteReport rep;
  AttackOptions opts;
  opts.seed = seed;
  for (const auto& p : profiles) {
    rep.profiles.push_back(p.name);
    auto& row = rep.cells[p.name];
    row["specload"] = speculative_load_test(p, seed);
    for (auto loc : {SecretLocation::L1, SecretLocation::MainMemory}) {
      for (auto trig : {WindowTrigger::CacheMiss, WindowTrigger::PageFault}) {
        std::string suffix = fmt::format("{}.{}", to_string(loc), to_string(trig));
        Scenario sc{trig, loc};
        row["v1." + suffix] = run_spectre_v1(p, sc, opts).success;
        row["rsb." + suffix] =
            trig == WindowTrigger::PageFault ? std::nullopt : std::optional<bool>(run_spectre_rsb(p, sc, opts).success);
      }
    }
    row["v3"] = run_meltdown_v3(p, opts).success;
    row["v3a"] = run_meltdown_v3a(p, opts).success;
    row["v4"] = run_spectre_v4(p, opts).success;

    auto g = golden_matrix().find(p.name);
    if (g == golden_matrix().end()) continue;
    for (const auto& col : matrix_columns()) {
      const auto& want = g->second.at(col);
      if (row[col] != want) rep.diff.push_back({p.name, col, want, row[col]});
    }
  }
  return rep;
}

json SuiteReport::to_json() const {
  json j;
  j["profiles"] = profiles;
  json c = json::object();
  for (const auto& [name, row] : cells)
    for (const auto& [col, v] : row) c[name][col] = cell_json(v);
  j["cells"] = c;
  json d = json::array();
  for (const auto& e : diff)
    d.push_back({{"profile", e.profile}, {"column", e.column}, {"expected", cell_json(e.expected)},
                 {"actual", cell_json(e.actual)}});
  j["diff"] = d;
  j["passed"] = passed();
  return j;
}

std::string SuiteReport::to_csv() const {
  std::string out = "profile,column,result,golden\n";
  for (const auto& name : profiles) {
    auto g = golden_matrix().find(name);
    for (const auto& col : matrix_columns()) {
      std::string want = g == golden_matrix().end() ? "" : mark(g->second.at(col));
      out += fmt::format("{},{},{},{}\n", name, col, mark(cells.at(name).at(col)), want);
    }
  }
  return out;
}

std::string SuiteReport::to_table() const {
  std::string out;
  auto grid = [&](const std::string& title, const std::vector<std::string>& heads,
                  const std::vector<std::string>& cols) {
    out += title + "\n";
    out += fmt::format("{:<14}", "CPU");
    for (const auto& h : heads) out += fmt::format("{:>10}", h);
    out += "\n";
    for (const auto& name : profiles) {
      out += fmt::format("{:<14}", display_name(name));
      for (const auto& c : cols) out += fmt::format("{:>10}", mark(cells.at(name).at(c)));
      out += "\n";
    }
    out += "\n";
  };
  const std::vector<std::string> heads = {"SpecLoad", "L1 CM", "L1 PF", "DRAM CM", "DRAM PF"};
  grid("Spectre V1", heads,
       {"specload", "v1.l1.cachemiss", "v1.l1.pagefault", "v1.dram.cachemiss", "v1.dram.pagefault"});
  grid("SpectreRSB", heads,
       {"specload", "rsb.l1.cachemiss", "rsb.l1.pagefault", "rsb.dram.cachemiss", "rsb.dram.pagefault"});
  grid("Variants 3, 3a and 4", {"V3", "V3a", "V4"}, {"v3", "v3a", "v4"});
  if (diff.empty()) {
    out += "diff: none\n";
  } else {
    out += "diff:\n";
    for (const auto& d : diff)
      out += fmt::format("  {} {}: expected {} got {}\n", d.profile, d.column, mark(d.expected), mark(d.actual));
  }
  return out;
}

// ---- experiments ----

std::string Report::emit(OutputFormat format) const {
  switch (format) {
    case OutputFormat::Json: return data.dump(2) + "\n";
    case OutputFormat::Csv: return csv;
    case OutputFormat::Table: return table;
  }
  return {};
}

namespace {

Report attack_report(const ExperimentConfig& cfg) {
  AttackOptions opts;
  opts.seed = cfg.seed;
  if (cfg.secret) opts.secret = *cfg.secret;
  auto profile = apply(cfg.base_profile(), cfg.mitigations);
  auto out = run_attack(cfg.variant, profile, cfg.scenario, opts);

  Report r;
  r.kind = ExperimentKind::Attack;
  r.passed = out.success;
  r.data = json::parse(out.to_json());
  r.csv = "index,expected,recovered\n";
  for (std::size_t i = 0; i < out.expected.size(); ++i) {
    std::string got = i < out.recovered.size() && out.recovered[i] ? fmt::format("{:02x}", *out.recovered[i]) : "";
    r.csv += fmt::format("{},{:02x},{}\n", i, out.expected[i], got);
  }
  r.table = fmt::format("{:<10}{:<14}{:<12}{:<8}{:<9}{}\n", "variant", "profile", "scenario", "secret", "success",
                        "recovered");
  r.table += fmt::format("{:<10}{:<14}{:<12}{:<8}{:<9}{}\n", to_string(cfg.variant), display_name(profile.name),
                         to_string(cfg.scenario.trigger), to_string(cfg.scenario.secret), out.success ? "Y" : "N",
                         out.recovered_hex());
  if (!out.error.empty()) r.table += "error: " + out.error + "\n";
  if (cfg.channel.emit_latency_trace) {
    r.latency_trace_csv = "byte,line,latency\n";
    for (std::size_t i = 0; i < out.probe_latencies.size(); ++i)
      for (std::size_t l = 0; l < out.probe_latencies[i].size(); ++l)
        r.latency_trace_csv += fmt::format("{},{},{}\n", i, l, out.probe_latencies[i][l]);
  }
  return r;
}

std::string channel_row(const ChannelReport& c) {
  return fmt::format("{:>4}{:>10}{:>8}{:>10}{:>12}{:>14.4f}{:>8}\n", c.bits_per_cs, c.bits_sent, c.bit_errors,
                     c.erasures, c.total_cycles, c.bandwidth_bits_per_kcycle(), c.required_memory_bytes);
}

std::string channel_header() {
  return fmt::format("{:>4}{:>10}{:>8}{:>10}{:>12}{:>14}{:>8}\n", "b", "bits", "errors", "erasures", "cycles",
                     "bits/kcycle", "memory");
}

Report covert_report(const ExperimentConfig& cfg) {
  auto profile = apply(cfg.base_profile(), cfg.mitigations);
  auto c = run_channel(cfg.resolved_message(), cfg.channel, profile);
  Report r;
  r.kind = ExperimentKind::Covert;
  r.passed = !c.aborted && c.bit_errors == 0;
  r.data = json::parse(c.to_json());
  r.data["profile"] = profile.name;
  r.data["noise"] = cfg.channel.noise_probability;
  r.data["sent_hex"] = to_hex(cfg.resolved_message());
  r.csv = "bits_per_cs,bits_sent,bit_errors,symbol_errors,erasures,total_cycles,bandwidth,memory\n";
  r.csv += fmt::format("{},{},{},{},{},{},{:.6f},{}\n", c.bits_per_cs, c.bits_sent, c.bit_errors, c.symbol_errors,
                       c.erasures, c.total_cycles, c.bandwidth_bits_per_kcycle(), c.required_memory_bytes);
  r.table = channel_header() + channel_row(c);
  if (c.aborted) r.table += "aborted: " + c.error + "\n";
  if (cfg.channel.emit_latency_trace) r.latency_trace_csv = c.latency_trace_csv();
  return r;
}

Report sweep_report(const ExperimentConfig& cfg) {
  auto profile = apply(cfg.base_profile(), cfg.mitigations);
  auto rows = sweep_bits(cfg.resolved_message(), profile, cfg.bits_min, cfg.bits_max, cfg.channel);
  Report r;
  r.kind = ExperimentKind::Sweep;
  r.passed = std::none_of(rows.begin(), rows.end(), [](const auto& c) { return c.aborted; });
  json arr = json::array();
  for (const auto& c : rows) arr.push_back(json::parse(c.to_json()));
  r.data["profile"] = profile.name;
  r.data["rows"] = arr;
  auto best = std::max_element(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    return a.bandwidth_bits_per_cycle() < b.bandwidth_bits_per_cycle();
  });
  r.data["argmax_bits"] = best->bits_per_cs;
  r.csv = sweep_csv(rows);
  r.table = channel_header();
  for (const auto& c : rows) r.table += channel_row(c);
  return r;
}

Report matrix_report(const ExperimentConfig& cfg) {
  std::vector<CpuProfile> profiles;
  if (cfg.profiles.empty()) {
    for (const auto& p : builtin_profiles()) profiles.push_back(apply(cfg.base_profile(p.name), cfg.mitigations));
  } else {
    for (const auto& name : cfg.profiles) profiles.push_back(apply(cfg.base_profile(name), cfg.mitigations));
  }
  auto suite = run_matrix(profiles, cfg.seed);
  Report r;
  r.kind = ExperimentKind::Matrix;
  r.passed = suite.passed();
  r.data = suite.to_json();
  r.csv = suite.to_csv();
  r.table = suite.to_table();
  return r;
}

Report mitigation_report(const ExperimentConfig& cfg) {
  auto rep = run_mitigation_demo(cfg.demo, cfg.base_profile(), cfg.mitigations, cfg.seed, cfg.noise_trials);
  Report r;
  r.kind = ExperimentKind::MitigationDemo;
  r.passed = rep.blocked;
  r.data = json::parse(rep.to_json());
  r.csv = "experiment,baseline,mitigated\n";
  r.table = fmt::format("{:<16}{:>10}{:>11}\n", "experiment", "baseline", "mitigated");
  for (const auto& row : rep.rows) {
    r.csv += fmt::format("{},{},{}\n", row.experiment, row.baseline ? "Y" : "N", row.mitigated ? "Y" : "N");
    r.table += fmt::format("{:<16}{:>10}{:>11}\n", row.experiment, row.baseline ? "Y" : "N", row.mitigated ? "Y" : "N");
  }
  if (rep.noise)
    r.table += fmt::format("noise amplitude {} over {} trials: accuracy {:.4f}\n", rep.noise->amplitude,
                           rep.noise->trials, rep.noise->accuracy);
  r.table += fmt::format("blocked: {}\n", rep.blocked ? "Y" : "N");
  return r;
}

}  // namespace

Report run_experiment(const ExperimentConfig& config) {
  config.validate();
  switch (config.experiment) {
    case ExperimentKind::Attack: return attack_report(config);
    case ExperimentKind::Covert: return covert_report(config);
    case ExperimentKind::Sweep: return sweep_report(config);
    case ExperimentKind::Matrix: return matrix_report(config);
    case ExperimentKind::MitigationDemo: return mitigation_report(config);
  }
  throw Error(ErrorCode::Internal, "unhandled experiment kind");
}

}  // namespace transim
