#include "transim/transim.h"

#include <cstdlib>
#include <cstring>
#include <new>
#include <set>

#include <fmt/format.h>

#include "harness.hpp"

struct transim_experiment {
  transim::ExperimentConfig config;
};

struct transim_report {
  transim::Report report;
};

struct transim_program {
  transim::Program program;
};

namespace {

thread_local std::string g_last_error;

transim_status status_of(transim::ErrorCode code) {
  using transim::ErrorCode;
  switch (code) {
    case ErrorCode::InvalidArgument: return TRANSIM_ERR_INVALID_ARGUMENT;
    case ErrorCode::Parse: return TRANSIM_ERR_PARSE;
    case ErrorCode::Config: return TRANSIM_ERR_CONFIG;
    case ErrorCode::UnknownProfile: return TRANSIM_ERR_UNKNOWN_PROFILE;
    case ErrorCode::Precondition:
    case ErrorCode::PrivilegedFlush: return TRANSIM_ERR_PRECONDITION;
    case ErrorCode::Assembly: return TRANSIM_ERR_ASSEMBLY;
    case ErrorCode::Internal: return TRANSIM_ERR_INTERNAL;
  }
  return TRANSIM_ERR_INTERNAL;
}

transim_status fail(transim_status s, std::string msg) {
  g_last_error = std::move(msg);
  return s;
}

template <class F>
transim_status guarded(F&& body) {
  try {
    g_last_error.clear();
    body();
    return TRANSIM_OK;
  } catch (const transim::Error& e) {
    return fail(status_of(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(TRANSIM_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(TRANSIM_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(TRANSIM_ERR_INTERNAL, "unknown exception");
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void require(const void* p, const char* what) {
  if (!p) throw transim::Error(transim::ErrorCode::InvalidArgument, fmt::format("{} must not be NULL", what));
}

transim::OutputFormat format_of(transim_format f) {
  switch (f) {
    case TRANSIM_FORMAT_JSON: return transim::OutputFormat::Json;
    case TRANSIM_FORMAT_CSV: return transim::OutputFormat::Csv;
    case TRANSIM_FORMAT_TABLE: return transim::OutputFormat::Table;
  }
  throw transim::Error(transim::ErrorCode::InvalidArgument, "unknown output format");
}

}  // namespace

extern "C" {

const char* transim_version(void) { return "1.0.0"; }

const char* transim_status_message(transim_status status) {
  switch (status) {
    case TRANSIM_OK: return "ok";
    case TRANSIM_ERR_INVALID_ARGUMENT: return "invalid argument";
    case TRANSIM_ERR_PARSE: return "parse error";
    case TRANSIM_ERR_CONFIG: return "invalid configuration";
    case TRANSIM_ERR_UNKNOWN_PROFILE: return "unknown profile";
    case TRANSIM_ERR_PRECONDITION: return "precondition violated";
    case TRANSIM_ERR_ASSEMBLY: return "assembly error";
    case TRANSIM_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* transim_last_error(void) { return g_last_error.c_str(); }

void transim_free_string(char* s) { std::free(s); }

transim_status transim_profiles_json(char** out) {
  return guarded([&] {
    require(out, "out");
    *out = dup_string(transim::profiles_json().dump(2));
  });
}

transim_status transim_attack_source(const char* name, char** out) {
  return guarded([&] {
    require(name, "name");
    require(out, "out");
    std::string_view n = name;
    std::string_view src;
    if (n == "v1") src = transim::spectre_v1_source();
    else if (n == "specload") src = transim::speculative_load_source();
    else if (n == "rsb") src = transim::spectre_rsb_source();
    else if (n == "v3") src = transim::meltdown_v3_source();
    else if (n == "v3a") src = transim::meltdown_v3a_source();
    else if (n == "v4") src = transim::spectre_v4_source();
    else throw transim::Error(transim::ErrorCode::InvalidArgument, fmt::format("no built-in program named {}", n));
    *out = dup_string(std::string(src));
  });
}

transim_status transim_experiment_create(transim_experiment** out) {
  return guarded([&] {
    require(out, "out");
    *out = nullptr;
    *out = new transim_experiment{transim::ExperimentConfig::defaults()};
  });
}

transim_status transim_experiment_load_file(transim_experiment* exp, const char* path) {
  return guarded([&] {
    require(exp, "experiment");
    require(path, "path");
    exp->config = transim::load_config(path);
  });
}

transim_status transim_experiment_load_json(transim_experiment* exp, const char* text) {
  return guarded([&] {
    require(exp, "experiment");
    require(text, "text");
    exp->config = transim::parse_config(text);
  });
}

transim_status transim_experiment_set(transim_experiment* exp, const char* key, const char* value) {
  return guarded([&] {
    require(exp, "experiment");
    require(key, "key");
    require(value, "value");
    // Hex payloads such as 4849 would otherwise parse as numbers.
    static const std::set<std::string> raw_keys = {"message", "secret"};
    nlohmann::json v = nlohmann::json::parse(value, nullptr, false);
    if (v.is_discarded() || (raw_keys.count(key) && !v.is_string())) v = std::string(value);
    auto next = exp->config;
    next.set(key, v);
    next.validate();
    exp->config = std::move(next);
  });
}

transim_status transim_experiment_format(const transim_experiment* exp, transim_format* out) {
  return guarded([&] {
    require(exp, "experiment");
    require(out, "out");
    switch (exp->config.format) {
      case transim::OutputFormat::Json: *out = TRANSIM_FORMAT_JSON; break;
      case transim::OutputFormat::Csv: *out = TRANSIM_FORMAT_CSV; break;
      case transim::OutputFormat::Table: *out = TRANSIM_FORMAT_TABLE; break;
    }
  });
}

transim_status transim_experiment_resolved_json(const transim_experiment* exp, char** out) {
  return guarded([&] {
    require(exp, "experiment");
    require(out, "out");
    exp->config.validate();
    *out = dup_string(exp->config.to_json().dump(2));
  });
}

transim_status transim_experiment_run(const transim_experiment* exp, transim_report** out) {
  return guarded([&] {
    require(exp, "experiment");
    require(out, "out");
    *out = nullptr;
    *out = new transim_report{transim::run_experiment(exp->config)};
  });
}

void transim_experiment_destroy(transim_experiment* exp) { delete exp; }

int transim_report_passed(const transim_report* report) { return report && report->report.passed ? 1 : 0; }

transim_status transim_report_emit(const transim_report* report, transim_format format, char** out) {
  return guarded([&] {
    require(report, "report");
    require(out, "out");
    *out = dup_string(report->report.emit(format_of(format)));
  });
}

transim_status transim_report_latency_trace_csv(const transim_report* report, char** out) {
  return guarded([&] {
    require(report, "report");
    require(out, "out");
    *out = dup_string(report->report.latency_trace_csv);
  });
}

void transim_report_destroy(transim_report* report) { delete report; }

transim_status transim_program_assemble(const char* source, transim_program** out) {
  return guarded([&] {
    require(source, "source");
    require(out, "out");
    *out = nullptr;
    *out = new transim_program{transim::assemble(source)};
  });
}

size_t transim_program_size(const transim_program* program) { return program ? program->program.size() : 0; }

transim_status transim_program_disassemble(const transim_program* program, char** out) {
  return guarded([&] {
    require(program, "program");
    require(out, "out");
    *out = dup_string(transim::disassemble(program->program));
  });
}

transim_status transim_program_validate(const transim_program* program, const char* profile, char** out_json) {
  return guarded([&] {
    require(program, "program");
    require(out_json, "out_json");
    transim::ValidateOptions opts;
    if (profile) {
      const auto& p = transim::builtin_profile(profile);
      opts.rsb_size = p.rsb_size;
      opts.flush_is_privileged = p.mitigations.privileged_flush;
    }
    auto rep = transim::validate(program->program, opts);
    static constexpr const char* kinds[] = {"privileged-opcode", "call-depth-exceeds-rsb", "unbounded-recursion",
                                            "unreachable", "no-termination"};
    nlohmann::json findings = nlohmann::json::array();
    for (const auto& f : rep.findings)
      findings.push_back({{"kind", kinds[static_cast<int>(f.kind)]}, {"pc", f.pc}, {"message", f.message}});
    nlohmann::json j;
    j["findings"] = findings;
    j["max_call_depth"] = rep.max_call_depth ? nlohmann::json(*rep.max_call_depth) : nlohmann::json(nullptr);
    *out_json = dup_string(j.dump(2));
  });
}

void transim_program_destroy(transim_program* program) { delete program; }

}  // extern "C"
