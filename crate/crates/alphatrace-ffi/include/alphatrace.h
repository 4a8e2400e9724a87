/* C ABI for the alphatrace factor engine. */

#ifndef ALPHATRACE_H
#define ALPHATRACE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code returned by every fallible call.
 */
typedef enum AtStatus {
  AtStatus_Ok = 0,
  /**
   * A required pointer argument was null.
   */
  AtStatus_NullArgument = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  AtStatus_InvalidUtf8 = 2,
  /**
   * The recipe text failed to parse.
   */
  AtStatus_ParseError = 3,
  /**
   * The recipe parsed but violated a structural rule.
   */
  AtStatus_ValidationError = 4,
  /**
   * The data file could not be read or ingested.
   */
  AtStatus_IoError = 5,
  /**
   * Evaluation failed (bad parameters, degenerate inputs).
   */
  AtStatus_EvalError = 6,
  /**
   * An internal panic was caught at the boundary.
   */
  AtStatus_InternalPanic = 7,
} AtStatus;

/**
 * Opaque handle to an ingested data panel.
 */
typedef struct AtPanel AtPanel;

/**
 * Opaque handle to a parsed recipe expression.
 */
typedef struct AtRecipe AtRecipe;

/**
 * Per-recipe feedback metrics, mirrored from the engine's evaluation tuple.
 * `ic_tstat` is +/- infinity when `ic_tstat_degenerate` is non-zero.
 */
typedef struct AtMetrics {
  double mean_ic;
  double ic_tstat;
  double ls_sharpe;
  double coverage;
  uint64_t n_days;
  uint8_t ic_tstat_degenerate;
  /**
   * Verdict of the default evidence gate over the evaluated dates.
   */
  uint8_t gate_passed;
} AtMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string; never freed.
 */
const char *at_version(void);

/**
 * Message for the most recent failure on this thread. The pointer stays
 * valid until the next failing call on the same thread; do not free it.
 */
const char *at_last_error(void);

/**
 * Release a string previously returned by this library.
 *
 * # Safety
 * `s` must be null or a pointer returned by an `at_*` function documented
 * as caller-owned, and must not be used afterwards.
 */
void at_string_free(char *s);

/**
 * Load a raw OHLCV+market-cap CSV (default column names) and attach the
 * standard derived columns. On success writes a new handle to `out`.
 *
 * # Safety
 * `path` must be a valid C string and `out` a valid pointer.
 */
enum AtStatus at_panel_load(const char *path, struct AtPanel **out);

/**
 * Release a panel handle.
 *
 * # Safety
 * `p` must be null or a pointer from `at_panel_load`, not used afterwards.
 */
void at_panel_free(struct AtPanel *p);

/**
 * Number of assets in the panel; 0 if the handle is null.
 *
 * # Safety
 * `p` must be null or a valid panel handle.
 */
uint64_t at_panel_n_assets(const struct AtPanel *p);

/**
 * Number of dates in the panel; 0 if the handle is null.
 *
 * # Safety
 * `p` must be null or a valid panel handle.
 */
uint64_t at_panel_n_dates(const struct AtPanel *p);

/**
 * Parse recipe text into a handle. On success writes a new handle to `out`.
 *
 * # Safety
 * `text` must be a valid C string and `out` a valid pointer.
 */
enum AtStatus at_recipe_parse(const char *text, struct AtRecipe **out);

/**
 * Release a recipe handle.
 *
 * # Safety
 * `r` must be null or a pointer from `at_recipe_parse`, not used afterwards.
 */
void at_recipe_free(struct AtRecipe *r);

/**
 * Canonical single-line form of the recipe. Caller owns the returned string
 * (`at_string_free`); null if the handle is null.
 *
 * # Safety
 * `r` must be null or a valid recipe handle.
 */
char *at_recipe_canonical(const struct AtRecipe *r);

/**
 * Check a recipe against an approved-column list and a depth budget.
 * Returns `Ok` when valid; `ValidationError` puts the joined violation
 * messages in `at_last_error`.
 *
 * # Safety
 * `r` must be a valid recipe handle and `columns` an array of `n_columns`
 * valid C strings.
 */
enum AtStatus at_recipe_validate(const struct AtRecipe *r,
                                 const char *const *columns,
                                 uintptr_t n_columns,
                                 uintptr_t max_depth);

/**
 * Evaluate a recipe over the whole panel and fill `out` with the feedback
 * metrics, using forward returns with the given execution lag and holding
 * period and the default evidence gate.
 *
 * # Safety
 * `panel` and `recipe` must be valid handles; `out` must point to an
 * `AtMetrics`.
 */
enum AtStatus at_recipe_metrics(const struct AtPanel *panel,
                                const struct AtRecipe *recipe,
                                uintptr_t exec_lag,
                                uintptr_t hold,
                                double ls_quantile,
                                struct AtMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ALPHATRACE_H */
