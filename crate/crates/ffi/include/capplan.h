#ifndef CAPPLAN_H
#define CAPPLAN_H

/* Generated by cbindgen; do not edit. */

#include <stdbool.h>
#include <stdint.h>

typedef enum CapplanStatus {
  CAPPLAN_STATUS_OK = 0,
  /**
   * Planning finished without a plan; the result document says why.
   */
  CAPPLAN_STATUS_NO_PLAN = 1,
  /**
   * The model parsed but failed validation.
   */
  CAPPLAN_STATUS_INVALID_MODEL = 2,
  CAPPLAN_STATUS_NULL_ARGUMENT = 10,
  CAPPLAN_STATUS_INVALID_UTF8 = 11,
  /**
   * The document is not a well-formed capability model.
   */
  CAPPLAN_STATUS_MODEL_ERROR = 12,
  CAPPLAN_STATUS_ENCODE_ERROR = 13,
  CAPPLAN_STATUS_SOLVER_ERROR = 14,
  CAPPLAN_STATUS_INVALID_ARGUMENT = 15,
  CAPPLAN_STATUS_PANIC = 99,
} CapplanStatus;

/**
 * Opaque handle to a parsed capability model.
 */
typedef struct CapplanModel CapplanModel;

typedef struct CapplanPlanOptions {
  /**
   * Solver command line, split on whitespace. NULL means `z3 -in`.
   */
  const char *solver_command;
  /**
   * Per-check limit in seconds; zero or less disables it.
   */
  double timeout_seconds;
  bool expanded_synonyms;
  bool incremental;
  bool minimize_core;
  bool produce_cores;
} CapplanPlanOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Parses a single document holding both domain and problem.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a writable pointer.
 */
enum CapplanStatus capplan_model_from_json(const char *json, struct CapplanModel **out);

/**
 * Merges a domain document with a problem document.
 *
 * # Safety
 * Both strings must be NUL-terminated and `out` a writable pointer.
 */
enum CapplanStatus capplan_model_from_documents(const char *domain,
                                                const char *problem,
                                                struct CapplanModel **out);

/**
 * # Safety
 * `model` must come from this library and not be freed twice. NULL is ignored.
 */
void capplan_model_free(struct CapplanModel *model);

/**
 * Writes a JSON report `{"valid": bool, "diagnostics": [...]}` to `out_json`.
 * Returns `InvalidModel` when there are findings.
 *
 * # Safety
 * `model` must be a live handle and `out_json` a writable pointer.
 */
enum CapplanStatus capplan_validate(const struct CapplanModel *model, char **out_json);

/**
 * Writes the SMT-LIB2 script for `bound + 1` happenings to `out_smt`.
 *
 * # Safety
 * `model` must be a live handle and `out_smt` a writable pointer.
 */
enum CapplanStatus capplan_dump_smt(const struct CapplanModel *model,
                                    uint32_t bound,
                                    bool expanded_synonyms,
                                    char **out_smt);

struct CapplanPlanOptions capplan_plan_options_default(void);

/**
 * Searches for a plan with at most `max_happenings + 1` happenings and writes
 * either the plan document or a `noPlan` report to `out_json`.
 * `options` may be NULL for defaults.
 *
 * # Safety
 * `model` must be a live handle, `options` NULL or valid, and `out_json` a
 * writable pointer.
 */
enum CapplanStatus capplan_plan(const struct CapplanModel *model,
                                uint32_t max_happenings,
                                const struct CapplanPlanOptions *options,
                                char **out_json);

/**
 * Message for the last failed call on this thread, or NULL. The pointer is
 * valid until the next call into this library from the same thread.
 */
const char *capplan_last_error(void);

/**
 * # Safety
 * `s` must come from this library and not be freed twice. NULL is ignored.
 */
void capplan_string_free(char *s);

const char *capplan_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CAPPLAN_H */
