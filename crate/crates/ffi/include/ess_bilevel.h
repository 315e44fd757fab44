#ifndef ESS_BILEVEL_H
#define ESS_BILEVEL_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum EssMode {
  ESS_MODE_LPCC = 0,
  ESS_MODE_BIG_M = 1,
} EssMode;

enum EssStatus
#if defined(__cplusplus) || __STDC_VERSION__ >= 202311L
  : int32_t
#endif // defined(__cplusplus) || __STDC_VERSION__ >= 202311L
 {
  ESS_STATUS_OK = 0,
  ESS_STATUS_NULL_POINTER = 1,
  ESS_STATUS_INVALID_ARGUMENT = 2,
  ESS_STATUS_PARSE = 3,
  ESS_STATUS_IO = 4,
  ESS_STATUS_SOLVER = 5,
  ESS_STATUS_VERIFICATION = 6,
  /**
   * The grid search would exceed its point budget.
   */
  ESS_STATUS_TOO_LARGE = 7,
  ESS_STATUS_PANIC = 99,
};
#ifndef __cplusplus
#if __STDC_VERSION__ >= 202311L
typedef enum EssStatus EssStatus;
#else
typedef int32_t EssStatus;
#endif // __STDC_VERSION__ >= 202311L
#endif // __cplusplus

typedef enum EssLoadProfile {
  ESS_LOAD_PROFILE_DUCK = 0,
  ESS_LOAD_PROFILE_TYPICAL = 1,
  ESS_LOAD_PROFILE_MIXED = 2,
} EssLoadProfile;

typedef enum EssPriceShape {
  ESS_PRICE_SHAPE_CONFORMING = 0,
  ESS_PRICE_SHAPE_CONFLICTING = 1,
} EssPriceShape;

/**
 * A validated instance with its resolved settings.
 */
typedef struct EssInstance EssInstance;

/**
 * Results of scenarios 1-3 on one instance.
 */
typedef struct EssReport EssReport;

/**
 * Solver settings for [`ess_run_day`]. Non-positive limits mean none.
 */
typedef struct EssRunOptions {
  enum EssMode mode;
  double time_limit_secs;
  double grid_step;
} EssRunOptions;

/**
 * Percentage reductions of one scenario against the no-storage baseline.
 * `customers_2` is NaN when there is a single customer.
 */
typedef struct EssReductions {
  double disco;
  double customers_1;
  double customers_2;
  double peak;
} EssReductions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer
 * stays valid until the next call into the library on this thread.
 */
const char *ess_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ess_version(void);

/**
 * Options matching the command-line defaults: LPCC, no limits.
 */
struct EssRunOptions ess_run_options_default(void);

/**
 * Reads loads, prices and a configuration file.
 *
 * # Safety
 * The paths must be NUL-terminated strings and `out` a valid pointer.
 */
EssStatus ess_instance_load(const char *loads,
                            const char *prices,
                            const char *config,
                            struct EssInstance **out);

/**
 * Builds an instance from a seeded synthetic day and default parameters.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
EssStatus ess_instance_synthetic(size_t customers,
                                 size_t slots,
                                 enum EssLoadProfile profile,
                                 enum EssPriceShape price_shape,
                                 uint64_t seed,
                                 double total_capacity,
                                 struct EssInstance **out);

/**
 * # Safety
 * `instance` must come from this library and not be used afterwards.
 */
void ess_instance_free(struct EssInstance *instance);

/**
 * # Safety
 * Pointers must be valid.
 */
EssStatus ess_instance_dims(const struct EssInstance *instance, size_t *customers, size_t *slots);

/**
 * Runs scenarios 1-3. With `options` NULL the instance's own settings apply.
 *
 * # Safety
 * `instance` and `out` must be valid; `options` may be NULL.
 */
EssStatus ess_run_day(const struct EssInstance *instance,
                      const struct EssRunOptions *options,
                      struct EssReport **out);

/**
 * # Safety
 * `report` must come from this library and not be used afterwards.
 */
void ess_report_free(struct EssReport *report);

/**
 * Capacity of the DisCo and of each customer in `scenario` (1-3).
 * `customers_len` must equal the instance's customer count.
 *
 * # Safety
 * `customer_shares` must point to `customers_len` writable doubles.
 */
EssStatus ess_report_division(const struct EssReport *report,
                              uint8_t scenario,
                              double *disco_share,
                              double *customer_shares,
                              size_t customers_len);

/**
 * # Safety
 * Pointers must be valid.
 */
EssStatus ess_report_reductions(const struct EssReport *report,
                                uint8_t scenario,
                                struct EssReductions *out);

/**
 * Upper-level objective of `scenario` and the exit code of its bilevel
 * solve (0 optimal, 2 infeasible, 3 unbounded, 4 limit; 0 for scenario 1).
 *
 * # Safety
 * Pointers must be valid.
 */
EssStatus ess_report_objective(const struct EssReport *report,
                               uint8_t scenario,
                               double *objective,
                               int32_t *solve_code);

/**
 * Writes the report files into `dir`, creating it if needed.
 *
 * # Safety
 * `report` must be valid and `dir` a NUL-terminated string.
 */
EssStatus ess_report_write(const struct EssReport *report, const char *dir);

/**
 * Exports the big-M MILP of the shared scenario as MPS and reports the
 * number of 0-1 columns.
 *
 * # Safety
 * `instance` and `binaries` must be valid and `path` NUL-terminated.
 */
EssStatus ess_export_mps(const struct EssInstance *instance, const char *path, size_t *binaries);

/**
 * Best division on the grid with spacing `step`.
 *
 * # Safety
 * `customer_shares` must point to `customers_len` writable doubles; the
 * other pointers must be valid.
 */
EssStatus ess_grid_oracle(const struct EssInstance *instance,
                          double step,
                          double *objective,
                          double *disco_share,
                          double *customer_shares,
                          size_t customers_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ESS_BILEVEL_H */
