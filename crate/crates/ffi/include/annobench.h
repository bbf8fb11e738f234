#ifndef ANNOBENCH_H
#define ANNOBENCH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum WbStatus {
  WB_STATUS_OK = 0,
  WB_STATUS_NULL_POINTER = 1,
  WB_STATUS_INVALID_UTF8 = 2,
  WB_STATUS_IO = 3,
  WB_STATUS_PARSE = 4,
  WB_STATUS_INVALID = 5,
  WB_STATUS_INGEST = 6,
  WB_STATUS_SUBMISSION = 7,
  WB_STATUS_AUTH = 8,
  WB_STATUS_FORBIDDEN = 9,
  WB_STATUS_STALE = 10,
  WB_STATUS_NOT_FOUND = 11,
  WB_STATUS_CONFLICT = 12,
  WB_STATUS_UNKNOWN_TEMPLATE = 13,
  WB_STATUS_JSON = 14,
  WB_STATUS_PANIC = 15,
} WbStatus;

typedef enum WbExportFormat {
  WB_EXPORT_FORMAT_JSONL = 0,
  WB_EXPORT_FORMAT_CSV = 1,
} WbExportFormat;

// A loaded, validated task configuration.
typedef struct WbConfig WbConfig;

// A running task: instances, annotators and their stores.
typedef struct WbWorkbench WbWorkbench;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or NULL. The pointer
// stays valid until the next call on the same thread; do not free it.
const char *wb_last_error_message(void);

// Library version, static storage.
const char *wb_version(void);

// Frees a string returned by this library. NULL is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void wb_string_free(char *s);

// Loads and validates a YAML task file.
//
// # Safety
// `path` must be a valid C string; `out` must be writable.
enum WbStatus wb_config_load(const char *path, struct WbConfig **out);

// # Safety
// `config` must come from [`wb_config_load`] and not have been freed.
void wb_config_free(struct WbConfig *config);

// # Safety
// `config` must be a live handle; `out` must be writable.
enum WbStatus wb_config_scheme_count(const struct WbConfig *config, size_t *out);

// The config re-serialized as YAML.
//
// # Safety
// `config` must be a live handle; `out` must be writable.
enum WbStatus wb_config_to_yaml(const struct WbConfig *config, char **out);

// Opens a workbench: ingests data and recovers stored annotators. The
// config handle is not consumed. `background_training` of 0 disables the
// retraining thread.
//
// # Safety
// `config` must be a live handle; `out` must be writable.
enum WbStatus wb_workbench_open(const struct WbConfig *config,
                                int32_t background_training,
                                struct WbWorkbench **out);

// Snapshots every annotator and releases the handle.
//
// # Safety
// `wb` must come from [`wb_workbench_open`] and not have been freed.
void wb_workbench_free(struct WbWorkbench *wb);

// URL-argument login; returns the annotator's user id.
//
// # Safety
// Pointers must be valid as documented in the module conventions.
enum WbStatus wb_workbench_login_url(const struct WbWorkbench *wb,
                                     const char *worker_id,
                                     char **out_user_id);

// The annotator's current view as JSON (same shape as `GET /task`).
//
// # Safety
// Pointers must be valid as documented in the module conventions.
enum WbStatus wb_workbench_task_json(const struct WbWorkbench *wb,
                                     const char *user_id,
                                     char **out_json);

// Submits a JSON submission (same shape as the `POST /submit` body) and
// returns the outcome JSON. Validation failures return
// `WB_STATUS_SUBMISSION` with the per-scheme errors as the JSON error message.
//
// # Safety
// Pointers must be valid as documented in the module conventions.
enum WbStatus wb_workbench_submit_json(const struct WbWorkbench *wb,
                                       const char *user_id,
                                       const char *submission_json,
                                       char **out_json);

// Admin progress snapshot as JSON.
//
// # Safety
// Pointers must be valid as documented in the module conventions.
enum WbStatus wb_workbench_progress_json(const struct WbWorkbench *wb, char **out_json);

// Writes export files into `dir` (NULL for the default) and returns a JSON summary.
//
// # Safety
// Pointers must be valid as documented in the module conventions; `dir` may be NULL.
enum WbStatus wb_workbench_export(const struct WbWorkbench *wb,
                                  enum WbExportFormat format,
                                  const char *dir,
                                  char **out_summary_json);

// Sparse n-gram feature counts of `text` as a JSON object.
//
// # Safety
// Pointers must be valid as documented in the module conventions.
enum WbStatus wb_featurize_json(const char *text, char **out_json);

// Keyword matches in `text`. `groups_json` maps group names to pattern
// lists, e.g. `{"retirement": ["retir*"]}`. Returns a JSON list of spans
// with code-point offsets.
//
// # Safety
// Pointers must be valid as documented in the module conventions.
enum WbStatus wb_match_keywords_json(const char *text, const char *groups_json, char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ANNOBENCH_H */
