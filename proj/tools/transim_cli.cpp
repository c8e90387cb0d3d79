#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "transim/transim.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct CString {
  char* p = nullptr;
  ~CString() { transim_free_string(p); }
  std::string str() const { return p ? p : ""; }
};

struct Failure {
  transim_status status;
  std::string message;
};

void check(transim_status s) {
  if (s != TRANSIM_OK) throw Failure{s, transim_last_error()};
}

bool usage_class(transim_status s) {
  switch (s) {
    case TRANSIM_ERR_INVALID_ARGUMENT:
    case TRANSIM_ERR_PARSE:
    case TRANSIM_ERR_CONFIG:
    case TRANSIM_ERR_UNKNOWN_PROFILE:
    case TRANSIM_ERR_PRECONDITION: return true;
    default: return false;
  }
}

std::string json_string(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

struct Common {
  std::optional<std::string> config;
  std::optional<std::string> profile;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> format;
  std::optional<std::string> output;
  std::optional<std::string> latency_trace;
  std::vector<std::string> overrides;  // profile fields, key=value
  std::vector<std::string> sets;       // config keys, key=value
};

struct Options {
  Common common;
  std::optional<std::string> variant, scenario, secret_loc, secret;
  std::optional<unsigned> bits, bits_min, bits_max, receiver_shift, rsb_depth, trials;
  std::optional<std::string> message;
  std::optional<double> noise;
  std::vector<std::string> matrix_profiles;
  std::optional<std::string> demo;
  bool privileged_flush = false, rsb_flush = false, rsb_refill = false, no_btb_fallback = false;
  std::optional<long long> pmu_noise;
  std::string asm_file, asm_builtin;
  std::optional<std::string> asm_validate;
  std::string profiles_format = "table";
};

void add_common(CLI::App* sub, Common& c, bool with_profile = true) {
  sub->add_option("--config", c.config, "JSON experiment config; command-line flags take precedence");
  if (with_profile) sub->add_option("--profile", c.profile, "CPU profile name (see `profiles list`)");
  sub->add_option("--seed", c.seed, "RNG seed (default: TRANSIENT_SIM_SEED or built-in constant)");
  sub->add_option("--format", c.format, "json, csv or table")->check(CLI::IsMember({"json", "csv", "table"}));
  sub->add_option("-o,--output", c.output, "write the report to a file instead of stdout");
  sub->add_option("--latency-trace", c.latency_trace, "write per-line probe latencies as CSV");
  sub->add_option("--override", c.overrides, "profile field override, key=value (e.g. dram_latency=150)");
  sub->add_option("--set", c.sets, "raw config key, key=value with a JSON value");
}

std::pair<std::string, std::string> split_kv(const std::string& kv) {
  auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0)
    throw Failure{TRANSIM_ERR_INVALID_ARGUMENT, "expected key=value, got '" + kv + "'"};
  return {kv.substr(0, eq), kv.substr(eq + 1)};
}

class Experiment {
 public:
  Experiment() { check(transim_experiment_create(&h_)); }
  ~Experiment() { transim_experiment_destroy(h_); }
  Experiment(const Experiment&) = delete;
  Experiment& operator=(const Experiment&) = delete;

  void load(const std::string& path) { check(transim_experiment_load_file(h_, path.c_str())); }
  void set(const std::string& key, const std::string& json) { check(transim_experiment_set(h_, key.c_str(), json.c_str())); }
  void set_str(const std::string& key, const std::string& v) { set(key, json_string(v)); }
  transim_experiment* get() const { return h_; }

 private:
  transim_experiment* h_ = nullptr;
};

void write_out(const std::optional<std::string>& path, const std::string& text) {
  if (!path) {
    std::fwrite(text.data(), 1, text.size(), stdout);
    return;
  }
  std::ofstream f(*path);
  if (!f) throw Failure{TRANSIM_ERR_INVALID_ARGUMENT, "cannot write " + *path};
  f << text;
}

// Builds the experiment (config file, then flags), runs it and prints the report.
int run_experiment(const char* kind, const Common& c, const std::function<void(Experiment&)>& flags) {
  Experiment exp;
  if (c.config) exp.load(*c.config);
  if (kind) exp.set_str("experiment", kind);
  if (c.profile) exp.set_str("profile", *c.profile);
  if (c.seed) exp.set("seed", std::to_string(*c.seed));
  if (c.format) exp.set_str("format", *c.format);
  if (c.latency_trace) exp.set("emit_latency_trace", "true");
  for (const auto& kv : c.overrides) {
    auto [k, v] = split_kv(kv);
    exp.set("profile_overrides", "{" + json_string(k) + ":" + v + "}");
  }
  for (const auto& kv : c.sets) {
    auto [k, v] = split_kv(kv);
    exp.set(k, v);
  }
  if (flags) flags(exp);

  transim_report* report = nullptr;
  check(transim_experiment_run(exp.get(), &report));
  std::unique_ptr<transim_report, void (*)(transim_report*)> guard(report, transim_report_destroy);
  transim_format fmt = TRANSIM_FORMAT_JSON;
  check(transim_experiment_format(exp.get(), &fmt));
  CString text;
  check(transim_report_emit(report, fmt, &text.p));
  write_out(c.output, text.str());
  if (c.latency_trace) {
    CString trace;
    check(transim_report_latency_trace_csv(report, &trace.p));
    write_out(c.latency_trace, trace.str());
  }
  return transim_report_passed(report) ? kExitOk : kExitFailure;
}

int profiles_list(const std::string& format) {
  CString s;
  check(transim_profiles_json(&s.p));
  if (format == "json") {
    std::cout << s.str() << "\n";
    return kExitOk;
  }
  std::printf("%-12s %-13s %-9s %-17s %s\n", "name", "pipeline", "rsb_size", "rsb_underflow", "eviction");
  for (const auto& p : nlohmann::json::parse(s.str())) {
    std::printf("%-12s %-13s %-9u %-17s %s\n", p["name"].get<std::string>().c_str(),
                p["pipeline"].get<std::string>().c_str(), p["rsb_size"].get<unsigned>(),
                p["rsb_underflow"].get<std::string>().c_str(), p["eviction_method"].get<std::string>().c_str());
  }
  return kExitOk;
}

int assemble_cmd(const Options& o) {
  std::string source;
  if (!o.asm_builtin.empty()) {
    CString s;
    check(transim_attack_source(o.asm_builtin.c_str(), &s.p));
    source = s.str();
  } else {
    std::ifstream f(o.asm_file);
    if (!f) throw Failure{TRANSIM_ERR_INVALID_ARGUMENT, "cannot open " + o.asm_file};
    std::stringstream ss;
    ss << f.rdbuf();
    source = ss.str();
  }
  transim_program* prog = nullptr;
  check(transim_program_assemble(source.c_str(), &prog));
  std::unique_ptr<transim_program, void (*)(transim_program*)> guard(prog, transim_program_destroy);
  CString text;
  check(transim_program_disassemble(prog, &text.p));
  std::cout << text.str();
  if (o.asm_validate) {
    CString findings;
    check(transim_program_validate(prog, o.asm_validate->empty() ? nullptr : o.asm_validate->c_str(), &findings.p));
    std::cout << findings.str() << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Speculative CPU simulator and transient-execution attack harness"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(transim_version()));
  Options o;

  auto* profiles = app.add_subcommand("profiles", "built-in CPU profiles");
  auto* profiles_list_cmd = profiles->add_subcommand("list", "list profiles");
  profiles_list_cmd->add_option("--format", o.profiles_format, "json or table")
      ->check(CLI::IsMember({"json", "table"}));
  profiles->require_subcommand(1);

  auto* attack = app.add_subcommand("attack", "run one attack");
  add_common(attack, o.common);
  attack->add_option("--variant", o.variant, "v1, v3, v3a, v4 or rsb")
      ->check(CLI::IsMember({"v1", "v3", "v3a", "v4", "rsb"}));
  attack->add_option("--scenario", o.scenario, "specload, cachemiss or pagefault")
      ->check(CLI::IsMember({"specload", "cachemiss", "pagefault"}));
  attack->add_option("--secret-loc", o.secret_loc, "l1 or dram")->check(CLI::IsMember({"l1", "dram"}));
  attack->add_option("--secret", o.secret, "secret bytes as hex");

  auto* covert = app.add_subcommand("covert", "send a message over the RSB covert channel");
  add_common(covert, o.common);
  covert->add_option("--bits", o.bits, "bits per context switch (1-6)");
  covert->add_option("--message", o.message, "message bytes as hex");
  covert->add_option("--noise", o.noise, "interloper probability per context switch");
  covert->add_option("--receiver-shift", o.receiver_shift, "misalign the receiver's landing pads");
  covert->add_option("--rsb-depth", o.rsb_depth, "calls the sender makes (default: RSB size)");

  auto* sweep = app.add_subcommand("sweep-bits", "bandwidth, errors and memory for each bits-per-switch value");
  add_common(sweep, o.common);
  sweep->add_option("--min", o.bits_min, "smallest b");
  sweep->add_option("--max", o.bits_max, "largest b");
  sweep->add_option("--message", o.message, "message bytes as hex");
  sweep->add_option("--noise", o.noise, "interloper probability per context switch");

  auto* matrix = app.add_subcommand("matrix", "susceptibility matrix with a diff against the golden tables");
  add_common(matrix, o.common, false);
  matrix->add_option("--profile", o.matrix_profiles, "restrict to these profiles (repeatable)");

  auto* mitigate = app.add_subcommand("mitigate", "countermeasure demo; exits 0 iff the mitigation blocked the leak");
  add_common(mitigate, o.common);
  mitigate->add_option("--demo", o.demo, "suite, refill-bypass or pmu-noise")
      ->check(CLI::IsMember({"suite", "refill-bypass", "pmu-noise"}));
  mitigate->add_flag("--privileged-flush", o.privileged_flush, "make the flush instruction privileged");
  mitigate->add_flag("--rsb-flush", o.rsb_flush, "flush the RSB on context switch");
  mitigate->add_flag("--rsb-refill", o.rsb_refill, "refill the RSB with a benign gadget on context switch");
  mitigate->add_flag("--no-btb-fallback", o.no_btb_fallback, "disable the BTB fallback on RSB underflow");
  mitigate->add_option("--pmu-noise", o.pmu_noise, "cycle counter noise amplitude");
  mitigate->add_option("--trials", o.trials, "trials for the pmu-noise demo");

  auto* run = app.add_subcommand("run", "run the experiment described by --config");
  add_common(run, o.common);
  run->get_option("--config")->required();

  auto* asm_cmd = app.add_subcommand("asm", "assemble, print canonical form, optionally validate");
  auto* file_opt = asm_cmd->add_option("file", o.asm_file, "assembly source file");
  auto* builtin_opt = asm_cmd->add_option("--builtin", o.asm_builtin, "built-in program: v1, specload, rsb, v3, v3a, v4");
  file_opt->excludes(builtin_opt);
  asm_cmd->add_option("--validate", o.asm_validate, "run static checks against a profile")->expected(0, 1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  CLI::App* active = app.get_subcommands().front();
  try {
    if (active == profiles) return profiles_list(o.profiles_format);
    if (active == asm_cmd) {
      if (o.asm_file.empty() && o.asm_builtin.empty())
        throw Failure{TRANSIM_ERR_INVALID_ARGUMENT, "asm needs a file or --builtin"};
      return assemble_cmd(o);
    }
    if (active == attack)
      return run_experiment("attack", o.common, [&](Experiment& e) {
        if (o.variant) e.set_str("variant", *o.variant);
        if (o.scenario) e.set_str("scenario", *o.scenario);
        if (o.secret_loc) e.set_str("secret_loc", *o.secret_loc);
        if (o.secret) e.set_str("secret", *o.secret);
      });
    if (active == covert || active == sweep)
      return run_experiment(active == covert ? "covert" : "sweep", o.common, [&](Experiment& e) {
        if (o.bits) e.set("bits", std::to_string(*o.bits));
        if (o.bits_min && o.bits_max)
          e.set("bits_range", "[" + std::to_string(*o.bits_min) + "," + std::to_string(*o.bits_max) + "]");
        else if (o.bits_min)
          e.set("bits_min", std::to_string(*o.bits_min));
        else if (o.bits_max)
          e.set("bits_max", std::to_string(*o.bits_max));
        if (o.message) e.set_str("message", *o.message);
        if (o.noise) e.set("noise", std::to_string(*o.noise));
        if (o.receiver_shift) e.set("receiver_shift", std::to_string(*o.receiver_shift));
        if (o.rsb_depth) e.set("rsb_fill_depth", std::to_string(*o.rsb_depth));
      });
    if (active == matrix)
      return run_experiment("matrix", o.common, [&](Experiment& e) {
        if (o.matrix_profiles.empty()) return;
        std::string arr = "[";
        for (std::size_t i = 0; i < o.matrix_profiles.size(); ++i)
          arr += (i ? "," : "") + json_string(o.matrix_profiles[i]);
        e.set("profiles", arr + "]");
      });
    if (active == mitigate)
      return run_experiment("mitigation-demo", o.common, [&](Experiment& e) {
        if (o.demo) e.set_str("demo", *o.demo);
        if (o.trials) e.set("noise_trials", std::to_string(*o.trials));
        std::string m = "{";
        auto flag = [&](const char* key, const std::string& v) {
          if (m.size() > 1) m += ",";
          m += json_string(key) + ":" + v;
        };
        if (o.privileged_flush) flag("privileged_flush", "true");
        if (o.rsb_flush) flag("rsb_flush_on_cs", "true");
        if (o.rsb_refill) flag("rsb_refill_on_cs", "true");
        if (o.no_btb_fallback) flag("btb_fallback_disabled", "true");
        if (o.pmu_noise) flag("pmu_noise_amplitude", std::to_string(*o.pmu_noise));
        e.set("mitigations", m + "}");
      });
    if (active == run) return run_experiment(nullptr, o.common, {});
  } catch (const Failure& f) {
    std::cerr << "error: " << f.message << "\n";
    if (usage_class(f.status)) {
      std::cerr << "\n" << active->help();
      return kExitUsage;
    }
    return kExitFailure;
  }
  return kExitUsage;
}
