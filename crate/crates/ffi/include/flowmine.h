#ifndef FLOWMINE_H
#define FLOWMINE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Pass as `FmMineOptions::window` to search the smallest feasible window.
 */
#define FM_WINDOW_AUTO -1

/**
 * Pass as `FmMineOptions::window` to count edge supports without a window.
 */
#define FM_WINDOW_OFF -2

typedef enum FmStatus {
  FM_STATUS_OK = 0,
  FM_STATUS_NULL_ARGUMENT = 1,
  FM_STATUS_INVALID_UTF8 = 2,
  FM_STATUS_PARSE_ERROR = 3,
  FM_STATUS_INVALID_ARGUMENT = 4,
  FM_STATUS_INFEASIBLE = 5,
  FM_STATUS_PANIC = 6,
} FmStatus;

typedef struct FmModel FmModel;

typedef struct FmTable FmTable;

typedef struct FmTrace FmTrace;

/**
 * Mining knobs. Zero for `sz`, `top` or `max_window` keeps the default.
 */
typedef struct FmMineOptions {
  /**
   * `FM_WINDOW_AUTO`, `FM_WINDOW_OFF`, or a window size >= 0.
   */
  int32_t window;
  uint32_t max_window;
  uint32_t sz;
  uint32_t top;
} FmMineOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. Valid until the
 * next failing call on the same thread.
 */
const char *fm_last_error_message(void);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library.
 */
void fm_string_free(char *s);

/**
 * Parses a message table (`<index> (<src>:<dest>:<cmd>)` per line).
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a valid pointer.
 */
enum FmStatus fm_table_parse(const char *text, struct FmTable **out);

/**
 * # Safety
 * `table` must be NULL or a handle from `fm_table_parse`, freed once.
 */
void fm_table_free(struct FmTable *table);

/**
 * Parses a trace; `table` may be NULL when the trace uses inline triples.
 *
 * # Safety
 * `text` must be a NUL-terminated string, `table` NULL or a live handle,
 * `out` a valid pointer.
 */
enum FmStatus fm_trace_parse(const char *text, const struct FmTable *table, struct FmTrace **out);

/**
 * Total message instances in the trace; 0 for NULL.
 *
 * # Safety
 * `trace` must be NULL or a live handle.
 */
uintptr_t fm_trace_msg_count(const struct FmTrace *trace);

/**
 * Serializes a trace; indices are used for messages found in `table`.
 *
 * # Safety
 * `trace` must be a live handle, `table` NULL or a live handle, `out` valid.
 */
enum FmStatus fm_trace_to_text(const struct FmTrace *trace,
                               const struct FmTable *table,
                               char **out);

/**
 * # Safety
 * `trace` must be NULL or a handle from this library, freed once.
 */
void fm_trace_free(struct FmTrace *trace);

/**
 * Mines the best model from `n` traces. `table` and `opts` may be NULL.
 *
 * Returns `FM_STATUS_INFEASIBLE` when no consistent model exists under the
 * requested window.
 *
 * # Safety
 * `traces` must point to `n` live trace handles; `out` must be valid.
 */
enum FmStatus fm_mine(const struct FmTrace *const *traces,
                      uintptr_t n,
                      const struct FmTable *table,
                      const struct FmMineOptions *opts,
                      struct FmModel **out);

/**
 * # Safety
 * `json` must be a NUL-terminated string and `out` valid.
 */
enum FmStatus fm_model_from_json(const char *json, struct FmModel **out);

/**
 * # Safety
 * `model` must be a live handle and `out` valid.
 */
enum FmStatus fm_model_to_json(const struct FmModel *model, char **out);

/**
 * Graphviz rendering; labels use `table` indices when a table is given.
 *
 * # Safety
 * `model` must be a live handle, `table` NULL or a live handle, `out` valid.
 */
enum FmStatus fm_model_to_dot(const struct FmModel *model, const struct FmTable *table, char **out);

/**
 * # Safety
 * `model` must be NULL or a handle from this library, freed once.
 */
void fm_model_free(struct FmModel *model);

/**
 * Acceptance ratio of `model` on `trace`. `strategy` is one of
 * `oldest-first` (used when NULL), `newest-first`, `exhaustive` or
 * `exhaustive:N`. `accepted` may be NULL.
 *
 * # Safety
 * Handles must be live; `ratio` must be valid; `accepted` NULL or valid.
 */
enum FmStatus fm_acceptance_ratio(const struct FmModel *model,
                                  const struct FmTrace *trace,
                                  const char *strategy,
                                  double *ratio,
                                  uintptr_t *accepted);

/**
 * Generates a synthetic trace from a flow spec.
 *
 * # Safety
 * `flowspec` must be a NUL-terminated string, `table` NULL or a live handle,
 * `out` valid.
 */
enum FmStatus fm_generate(const char *flowspec,
                          const struct FmTable *table,
                          uint32_t instances_per_flow,
                          uint64_t seed,
                          uint32_t max_gap,
                          double simul_prob,
                          struct FmTrace **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FLOWMINE_H */
