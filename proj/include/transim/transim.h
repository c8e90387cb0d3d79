#ifndef TRANSIM_TRANSIM_H
#define TRANSIM_TRANSIM_H

#include <stddef.h>

#if defined(_WIN32)
#define TRANSIM_API __declspec(dllexport)
#else
#define TRANSIM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum transim_status {
  TRANSIM_OK = 0,
  TRANSIM_ERR_INVALID_ARGUMENT = 1,
  TRANSIM_ERR_PARSE = 2,
  TRANSIM_ERR_CONFIG = 3,
  TRANSIM_ERR_UNKNOWN_PROFILE = 4,
  TRANSIM_ERR_PRECONDITION = 5,
  TRANSIM_ERR_ASSEMBLY = 6,
  TRANSIM_ERR_INTERNAL = 7
} transim_status;

typedef enum transim_format {
  TRANSIM_FORMAT_JSON = 0,
  TRANSIM_FORMAT_CSV = 1,
  TRANSIM_FORMAT_TABLE = 2
} transim_format;

typedef struct transim_experiment transim_experiment;
typedef struct transim_report transim_report;
typedef struct transim_program transim_program;

/* Strings returned through char** out parameters are owned by the caller
   and must be released with transim_free_string. */

TRANSIM_API const char* transim_version(void);
TRANSIM_API const char* transim_status_message(transim_status status);
/* Message of the last failed call on this thread; "" if none. */
TRANSIM_API const char* transim_last_error(void);
TRANSIM_API void transim_free_string(char* s);

TRANSIM_API transim_status transim_profiles_json(char** out);
/* Assembly source of a built-in attack program: v1, specload, rsb, v3, v3a, v4. */
TRANSIM_API transim_status transim_attack_source(const char* name, char** out);

TRANSIM_API transim_status transim_experiment_create(transim_experiment** out);
/* Replace the experiment with a JSON config (file path or text). */
TRANSIM_API transim_status transim_experiment_load_file(transim_experiment* exp, const char* path);
TRANSIM_API transim_status transim_experiment_load_json(transim_experiment* exp, const char* text);
/* Set one config key. value is JSON; text that does not parse as JSON is
   taken as a plain string, as are message and secret. The config is
   validated and left unchanged on error. */
TRANSIM_API transim_status transim_experiment_set(transim_experiment* exp, const char* key, const char* value);
TRANSIM_API transim_status transim_experiment_format(const transim_experiment* exp, transim_format* out);
TRANSIM_API transim_status transim_experiment_resolved_json(const transim_experiment* exp, char** out);
TRANSIM_API transim_status transim_experiment_run(const transim_experiment* exp, transim_report** out);
TRANSIM_API void transim_experiment_destroy(transim_experiment* exp);

/* 1 when the experiment succeeded (attack leaked, channel error-free,
   matrix matches the golden tables, mitigation blocked), else 0. */
TRANSIM_API int transim_report_passed(const transim_report* report);
TRANSIM_API transim_status transim_report_emit(const transim_report* report, transim_format format, char** out);
TRANSIM_API transim_status transim_report_latency_trace_csv(const transim_report* report, char** out);
TRANSIM_API void transim_report_destroy(transim_report* report);

TRANSIM_API transim_status transim_program_assemble(const char* source, transim_program** out);
TRANSIM_API size_t transim_program_size(const transim_program* program);
TRANSIM_API transim_status transim_program_disassemble(const transim_program* program, char** out);
/* Static checks against a profile's RSB size and flush privilege; JSON list
   of findings. profile may be NULL for the defaults. */
TRANSIM_API transim_status transim_program_validate(const transim_program* program, const char* profile,
                                                    char** out_json);
TRANSIM_API void transim_program_destroy(transim_program* program);

#ifdef __cplusplus
}
#endif

#endif
