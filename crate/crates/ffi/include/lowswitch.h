#ifndef LOWSWITCH_H
#define LOWSWITCH_H

/* Generated by cbindgen from lowswitch-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by fallible entry points.
 */
typedef enum LsStatus {
  LS_STATUS_OK = 0,
  /**
   * Invalid configuration or parameters.
   */
  LS_STATUS_CONFIG_ERROR = 1,
  /**
   * Runtime invariant or numerical failure.
   */
  LS_STATUS_RUNTIME_ERROR = 2,
  /**
   * I/O failure.
   */
  LS_STATUS_IO_ERROR = 3,
  /**
   * A required pointer argument was null.
   */
  LS_STATUS_NULL_POINTER = 4,
  /**
   * A string argument was not valid UTF-8.
   */
  LS_STATUS_INVALID_UTF8 = 5,
  /**
   * An internal panic was caught at the boundary.
   */
  LS_STATUS_PANIC = 6,
} LsStatus;

/**
 * Opaque handle to a linear MDP specification.
 */
typedef struct LsSpec LsSpec;

/**
 * Opaque handle to a completed run trace.
 */
typedef struct LsTrace LsTrace;

/**
 * Agent options for `ls_run`. `beta <= 0` selects the theoretical schedule
 * scaled by `c_beta`; `mode` is 0 for low-switch, 1 for always-switch.
 */
typedef struct LsAgentOptions {
  double lambda;
  double beta;
  double c_beta;
  double p;
  uint32_t mode;
  bool strict_paper;
} LsAgentOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the most recent failure on this thread; valid until
 * the next failing call on the same thread. Never null.
 */
const char *ls_last_error_message(void);

/**
 * Parses a spec from its JSON serialization. Returns null on failure.
 *
 * # Safety
 * `json` must be a valid NUL-terminated C string.
 */
struct LsSpec *ls_spec_from_json(const char *json);

/**
 * Seeded random tabular MDP embedded as a linear MDP. Returns null on
 * failure.
 */
struct LsSpec *ls_spec_random_tabular(uintptr_t n_states,
                                      uintptr_t n_actions,
                                      uintptr_t horizon,
                                      double sparsity,
                                      uint64_t seed);

/**
 * Seeded random linear MDP. Returns null on failure.
 */
struct LsSpec *ls_spec_random_linear(uintptr_t d,
                                     uintptr_t horizon,
                                     uintptr_t n_states,
                                     uintptr_t n_actions,
                                     uint64_t seed);

/**
 * Combination-lock hard instance. `h_star = 0` samples the lock depth
 * uniformly; `1 <= h_star <= h0` fixes it. Returns null on failure.
 */
struct LsSpec *ls_spec_hard_instance(uintptr_t d0,
                                     uintptr_t h0,
                                     uintptr_t h_star,
                                     uintptr_t j_star,
                                     uint64_t seed);

/**
 * Releases a spec handle. Null is a no-op.
 *
 * # Safety
 * `spec` must be a pointer returned by a `ls_spec_*` constructor, not yet
 * freed.
 */
void ls_spec_free(struct LsSpec *spec);

/**
 * Feature dimension `d`; 0 on a null handle.
 *
 * # Safety
 * `spec` must be a live spec handle or null.
 */
uintptr_t ls_spec_dim(const struct LsSpec *spec);

/**
 * Horizon `H`; 0 on a null handle.
 *
 * # Safety
 * `spec` must be a live spec handle or null.
 */
uintptr_t ls_spec_horizon(const struct LsSpec *spec);

/**
 * Number of states; 0 on a null handle.
 *
 * # Safety
 * `spec` must be a live spec handle or null.
 */
uintptr_t ls_spec_n_states(const struct LsSpec *spec);

/**
 * Serializes a spec to its JSON format. Returns null on failure; release
 * with `ls_string_free`.
 *
 * # Safety
 * `spec` must be a live spec handle or null.
 */
char *ls_spec_to_json(const struct LsSpec *spec);

/**
 * Theory-default agent options (`lambda = 1`, auto beta, `p = 0.05`).
 */
struct LsAgentOptions ls_agent_options_default(void);

/**
 * Runs the agent for `episodes` episodes and stores a trace handle in
 * `out_trace` on success.
 *
 * # Safety
 * `spec` must be a live spec handle; `options` and `out_trace` must be
 * valid pointers.
 */
enum LsStatus ls_run(const struct LsSpec *spec,
                     const struct LsAgentOptions *options,
                     uintptr_t episodes,
                     uint64_t seed,
                     struct LsTrace **out_trace);

/**
 * Releases a trace handle. Null is a no-op.
 *
 * # Safety
 * `trace` must be a pointer returned by `ls_run`, not yet freed.
 */
void ls_trace_free(struct LsTrace *trace);

/**
 * Number of episodes in the trace; 0 on a null handle.
 *
 * # Safety
 * `trace` must be a live trace handle or null.
 */
uintptr_t ls_trace_len(const struct LsTrace *trace);

/**
 * Global switching cost of the run; 0 on a null handle.
 *
 * # Safety
 * `trace` must be a live trace handle or null.
 */
uintptr_t ls_trace_global_switches(const struct LsTrace *trace);

/**
 * Cumulative regret after 1-based episode `episode`; NaN when out of range.
 *
 * # Safety
 * `trace` must be a live trace handle or null.
 */
double ls_trace_cumulative_regret(const struct LsTrace *trace, uintptr_t episode);

/**
 * Realized return of 1-based episode `episode`; NaN when out of range.
 *
 * # Safety
 * `trace` must be a live trace handle or null.
 */
double ls_trace_return(const struct LsTrace *trace, uintptr_t episode);

/**
 * Snapshot id deployed at 1-based episode `episode`; u64::MAX when out of
 * range.
 *
 * # Safety
 * `trace` must be a live trace handle or null.
 */
uint64_t ls_trace_snapshot_id(const struct LsTrace *trace, uintptr_t episode);

/**
 * Renders the trace as CSV (same format as the experiment runner's files).
 * Returns null on failure; release with `ls_string_free`.
 *
 * # Safety
 * `trace` must be a live trace handle or null.
 */
char *ls_trace_to_csv(const struct LsTrace *trace);

/**
 * Releases a string returned by this library. Null is a no-op.
 *
 * # Safety
 * `s` must be a pointer returned by a `*_to_json`/`*_to_csv` function, not
 * yet freed.
 */
void ls_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LOWSWITCH_H */
