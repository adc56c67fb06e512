#ifndef CEFORGE_H
#define CEFORGE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CeforgeEngine {
  CEFORGE_ENGINE_SINGLE = 0,
  CEFORGE_ENGINE_DUAL = 1,
} CeforgeEngine;

typedef enum CeforgeStatus {
  CEFORGE_STATUS_OK = 0,
  CEFORGE_STATUS_NULL_POINTER = 1,
  CEFORGE_STATUS_INVALID_UTF8 = 2,
  /**
   * Malformed input or a violated input invariant.
   */
  CEFORGE_STATUS_PARSE = 3,
  /**
   * A machine rejected a request during a run.
   */
  CEFORGE_STATUS_LEMMA_VIOLATION = 4,
  CEFORGE_STATUS_PANIC = 5,
} CeforgeStatus;

/**
 * Opaque scenario handle.
 */
typedef struct CeforgeScenario CeforgeScenario;

/**
 * Opaque trace handle.
 */
typedef struct CeforgeTrace CeforgeTrace;

/**
 * Message for the last failed call on this thread, or null. The pointer is
 * valid until the next call into this library on the same thread.
 */
const char *ceforge_last_error(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library, freed once.
 */
void ceforge_string_free(char *s);

/**
 * # Safety
 * `json` must be a valid C string; `out` must be writable.
 */
enum CeforgeStatus ceforge_scenario_from_json(const char *json, struct CeforgeScenario **out);

/**
 * Seeded random scenario with the default parameters for `stages`.
 *
 * # Safety
 * `out` must be writable.
 */
enum CeforgeStatus ceforge_scenario_generate(uint64_t seed,
                                             uint64_t stages,
                                             struct CeforgeScenario **out);

/**
 * # Safety
 * `scenario` must be a live handle; `out` must be writable.
 */
enum CeforgeStatus ceforge_scenario_to_json(const struct CeforgeScenario *scenario, char **out);

/**
 * Stage count stored in the scenario, or 0 for a null handle.
 *
 * # Safety
 * `scenario` must be null or a live handle.
 */
uint64_t ceforge_scenario_stages(const struct CeforgeScenario *scenario);

/**
 * # Safety
 * `scenario` must be null or a handle from this library, freed once.
 */
void ceforge_scenario_free(struct CeforgeScenario *scenario);

/**
 * Runs `stages` stages of an engine.
 *
 * # Safety
 * `scenario` must be a live handle; `out` must be writable.
 */
enum CeforgeStatus ceforge_run(const struct CeforgeScenario *scenario,
                               enum CeforgeEngine engine,
                               uint64_t stages,
                               struct CeforgeTrace **out);

/**
 * # Safety
 * `jsonl` must be a valid C string; `out` must be writable.
 */
enum CeforgeStatus ceforge_trace_from_jsonl(const char *jsonl, struct CeforgeTrace **out);

/**
 * # Safety
 * `trace` must be a live handle; `out` must be writable.
 */
enum CeforgeStatus ceforge_trace_to_jsonl(const struct CeforgeTrace *trace, char **out);

/**
 * # Safety
 * `trace` must be null or a handle from this library, freed once.
 */
void ceforge_trace_free(struct CeforgeTrace *trace);

/**
 * Audits `trace` against `scenario`. Writes the JSON report to `report` and
 * whether every check passed to `pass` (either may be null).
 *
 * # Safety
 * Handles must be live; non-null output pointers must be writable.
 */
enum CeforgeStatus ceforge_audit(const struct CeforgeScenario *scenario,
                                 const struct CeforgeTrace *trace,
                                 char **report,
                                 bool *pass);

/**
 * Kraft-Chaitin machine for `target<TAB>length` lines; writes the
 * `codeword<TAB>output<TAB>stage` dump.
 *
 * # Safety
 * `requests` must be a valid C string; `out` must be writable.
 */
enum CeforgeStatus ceforge_kc(const char *requests, char **out);

#endif  /* CEFORGE_H */
