#ifndef DUALDIV_H
#define DUALDIV_H

/* Generated by cbindgen from the dualdiv-ffi crate. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum DdStatus {
  DD_STATUS_OK = 0,
  DD_STATUS_NULL_POINTER = 1,
  DD_STATUS_VALIDATION = 2,
  DD_STATUS_DEGENERATE = 3,
  DD_STATUS_VERIFICATION_FAILED = 4,
  DD_STATUS_INTERNAL = 5,
  DD_STATUS_INVALID_UTF8 = 6,
} DdStatus;

typedef enum DdRegime {
  DD_REGIME_ALWAYS_MAX = 0,
  DD_REGIME_THRESHOLD = 1,
} DdRegime;

typedef enum DdStrategyKind {
  DD_STRATEGY_KIND_NONE = 0,
  DD_STRATEGY_KIND_CONST = 1,
  DD_STRATEGY_KIND_THRESHOLD = 2,
  DD_STRATEGY_KIND_BARRIER = 3,
} DdStrategyKind;

typedef enum DdEstimator {
  DD_ESTIMATOR_COLLAPSED = 0,
  DD_ESTIMATOR_RAW = 1,
} DdEstimator;

/**
 * Optimal unrestricted solution.
 */
typedef struct DdBarrier DdBarrier;

/**
 * A validated model.
 */
typedef struct DdModel DdModel;

/**
 * Optimal restricted (rate-capped) solution.
 */
typedef struct DdThreshold DdThreshold;

/**
 * Dividend strategy; `level` and `rate` are ignored where they do not apply.
 */
typedef struct DdStrategy {
  enum DdStrategyKind kind;
  double level;
  double rate;
} DdStrategy;

typedef struct DdEstimate {
  double mean;
  double std_err;
  double ci95_low;
  double ci95_high;
  uint64_t n_paths;
  double ruin_fraction;
} DdEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. Valid until
 * the next call into the library from the same thread.
 */
const char *dd_last_error_message(void);

/**
 * Release a string returned by the library. NULL is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void dd_string_free(char *s);

/**
 * Build a model with geometric Brownian discounting.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum DdStatus dd_model_new_gbm(double c,
                               double lambda,
                               double beta,
                               double r,
                               double m,
                               double delta,
                               struct DdModel **out);

/**
 * Build a model from its JSON description.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be valid for writes.
 */
enum DdStatus dd_model_from_json(const char *json, struct DdModel **out);

/**
 * Effective discount rate `theta`.
 *
 * # Safety
 * `model` must be a live handle; `out` must be valid for writes.
 */
enum DdStatus dd_model_theta(const struct DdModel *model, double *out);

/**
 * # Safety
 * `model` must be NULL or a live handle, not used afterwards.
 */
void dd_model_free(struct DdModel *model);

/**
 * Solve the rate-capped problem with cap `xi`.
 *
 * # Safety
 * `model` must be a live handle; `out` must be valid for writes.
 */
enum DdStatus dd_threshold_solve(const struct DdModel *model, double xi, struct DdThreshold **out);

/**
 * Switching level (0 in the always-max regime).
 *
 * # Safety
 * `sol` must be a live handle; `out` must be valid for writes.
 */
enum DdStatus dd_threshold_level(const struct DdThreshold *sol, double *out);

/**
 * # Safety
 * `sol` must be a live handle; `out` must be valid for writes.
 */
enum DdStatus dd_threshold_regime(const struct DdThreshold *sol, enum DdRegime *out);

/**
 * Value `e^{-r} F(x)` at surplus `x`.
 *
 * # Safety
 * `sol` must be a live handle; `out` must be valid for writes.
 */
enum DdStatus dd_threshold_value(const struct DdThreshold *sol, double x, double *out);

/**
 * Solution as JSON; release with `dd_string_free`.
 *
 * # Safety
 * `sol` must be a live handle; `out` must be valid for writes.
 */
enum DdStatus dd_threshold_to_json(const struct DdThreshold *sol, char **out);

/**
 * Check the HJB equation at `n_points` evenly spaced points on
 * `[0, 3 * level]` with tolerance `rel_tol` relative to `xi / theta`.
 * Returns `DD_STATUS_VERIFICATION_FAILED` if any point fails; the largest
 * residual is written to `max_abs` either way.
 *
 * # Safety
 * Handles must be live; `max_abs` must be valid for writes.
 */
enum DdStatus dd_threshold_verify(const struct DdThreshold *sol,
                                  const struct DdModel *model,
                                  size_t n_points,
                                  double rel_tol,
                                  double *max_abs);

/**
 * # Safety
 * `sol` must be NULL or a live handle, not used afterwards.
 */
void dd_threshold_free(struct DdThreshold *sol);

/**
 * Solve the unrestricted problem.
 *
 * # Safety
 * `model` must be a live handle; `out` must be valid for writes.
 */
enum DdStatus dd_barrier_solve(const struct DdModel *model, struct DdBarrier **out);

/**
 * # Safety
 * `sol` must be a live handle; `out` must be valid for writes.
 */
enum DdStatus dd_barrier_level(const struct DdBarrier *sol, double *out);

/**
 * Value `e^{-r} F(x)` at surplus `x`.
 *
 * # Safety
 * `sol` must be a live handle; `out` must be valid for writes.
 */
enum DdStatus dd_barrier_value(const struct DdBarrier *sol, double x, double *out);

/**
 * # Safety
 * `sol` must be a live handle; `out` must be valid for writes.
 */
enum DdStatus dd_barrier_to_json(const struct DdBarrier *sol, char **out);

/**
 * As `dd_threshold_verify`, with tolerance relative to `F(b)`.
 *
 * # Safety
 * Handles must be live; `max_abs` must be valid for writes.
 */
enum DdStatus dd_barrier_verify(const struct DdBarrier *sol,
                                const struct DdModel *model,
                                size_t n_points,
                                double rel_tol,
                                double *max_abs);

/**
 * # Safety
 * `sol` must be NULL or a live handle, not used afterwards.
 */
void dd_barrier_free(struct DdBarrier *sol);

/**
 * Monte Carlo estimate of `strategy`'s value from surplus `x`.
 *
 * # Safety
 * `model` must be a live handle; `out` must be valid for writes.
 */
enum DdStatus dd_simulate(const struct DdModel *model,
                          struct DdStrategy strategy,
                          double x,
                          uint64_t n_paths,
                          uint64_t seed,
                          enum DdEstimator estimator,
                          struct DdEstimate *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DUALDIV_H */
