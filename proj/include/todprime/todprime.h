/* todprime: few-shot LM priming for task-oriented dialogue, C interface.
 *
 * Every call returns a tp_status. On failure the message is available from
 * tp_last_error() on the same thread until the next call. Strings returned
 * through char** are owned by the caller and released with tp_string_free.
 */
#ifndef TODPRIME_H
#define TODPRIME_H

#include <stddef.h>

#if defined(_WIN32)
#  if defined(TP_BUILDING)
#    define TP_API __declspec(dllexport)
#  else
#    define TP_API __declspec(dllimport)
#  endif
#else
#  define TP_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum tp_status {
    TP_OK = 0,
    TP_ERR_INVALID_ARGUMENT = 1,
    TP_ERR_PARSE = 2,
    TP_ERR_SCHEMA = 3,
    TP_ERR_DUPLICATE_ID = 4,
    TP_ERR_INSUFFICIENT_DATA = 5,
    TP_ERR_BUDGET_EXCEEDED = 6,
    TP_ERR_PRECONDITION = 7,
    TP_ERR_BACKEND_UNAVAILABLE = 8,
    TP_ERR_CONTEXT_OVERFLOW = 9,
    TP_ERR_PROTOCOL = 10,
    TP_ERR_UNKNOWN_PROMPT = 11,
    TP_ERR_CONFIG = 12,
    TP_ERR_IO = 13,
    TP_ERR_INTERNAL = 14
} tp_status;

typedef struct tp_config tp_config;
typedef struct tp_backend tp_backend;

TP_API const char* tp_version(void);
TP_API const char* tp_status_name(tp_status status);
TP_API const char* tp_last_error(void);
TP_API void tp_string_free(char* s);

/* Experiment configuration. Relative paths in a file resolve against the
 * file's directory. Keys for tp_config_set are kebab-case option names,
 * e.g. "shots" = "1,5,10", "backend-url", "style-arrow". */
TP_API tp_status tp_config_load(const char* path, tp_config** out);
TP_API tp_status tp_config_from_json(const char* json, const char* base_dir, tp_config** out);
/* path may be NULL (start from an empty document). overrides holds
 * n_overrides (key, value) pairs laid out as key0, value0, key1, ... and is
 * applied before validation, so flags may supply required fields. */
TP_API tp_status tp_config_open(const char* path, const char* const* overrides, size_t n_overrides,
                                tp_config** out);
TP_API tp_status tp_config_set(tp_config* config, const char* key, const char* value);
TP_API tp_status tp_config_to_json(const tp_config* config, char** out);
TP_API void tp_config_free(tp_config* config);

/* Runs the sweep and writes outputs under out_dir (NULL: the configured
 * directory). Nothing is written unless every run completes. When
 * aggregate_json is not NULL it receives the per-shot aggregate reports. */
TP_API tp_status tp_experiment_run(const tp_config* config, const char* out_dir, char** aggregate_json);

/* Metrics-only mode; task is "slot_filling", "intent", "dst", "act" or "nlg". */
TP_API tp_status tp_score_files(const char* task, const char* gold_path, const char* pred_path,
                                char** report_json);

/* from: "snips", "multiwoz" or "fewshotwoz". n_records may be NULL. */
TP_API tp_status tp_convert(const char* from, const char* in_path, const char* out_path, const char* task,
                            size_t* n_records);

/* Backends: "scripted:PATH" or "http://host:port". Requests and responses
 * use the JSON wire format of POST /v1/complete. */
TP_API tp_status tp_backend_open(const char* spec, tp_backend** out);
TP_API tp_status tp_backend_probe(tp_backend* backend);
TP_API tp_status tp_backend_complete(tp_backend* backend, const char* request_json, char** response_json);
TP_API tp_status tp_backend_count_tokens(tp_backend* backend, const char* text, size_t* count);
TP_API void tp_backend_close(tp_backend* backend);

#ifdef __cplusplus
}
#endif

#endif /* TODPRIME_H */
