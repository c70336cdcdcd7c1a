#ifndef MBPRE_H
#define MBPRE_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Outcome of a call.
 */
typedef enum MbpreStatus {
  MBPRE_STATUS_OK = 0,
  MBPRE_STATUS_NULL_POINTER = 1,
  MBPRE_STATUS_INVALID_PARAMETER = 2,
  MBPRE_STATUS_DOMAIN = 3,
  MBPRE_STATUS_SINGULAR = 4,
  /**
   * A caller-supplied buffer is too small.
   */
  MBPRE_STATUS_BUFFER_TOO_SMALL = 5,
  /**
   * Any other failure, including a caught panic.
   */
  MBPRE_STATUS_INTERNAL = 6,
} MbpreStatus;

/**
 * Finite environment model.
 */
typedef struct MbpreEnv MbpreEnv;

/**
 * Finite fitness landscape.
 */
typedef struct MbpreLandscape MbpreLandscape;

/**
 * Result of an optimization.
 */
typedef struct MbpreResult MbpreResult;

/**
 * Solver settings. Pass NULL to use the defaults.
 */
typedef struct MbpreSolverOptions {
  double tol;
  size_t max_iter;
  double support_tol;
} MbpreSolverOptions;

/**
 * Closed-form optimum of the Gaussian model.
 */
typedef struct MbpreGaussianOptimum {
  double mean;
  double variance;
  double rate;
  double sensing_slope;
  double sensing_intercept;
  double sensing_variance;
  double sensing_rate;
} MbpreGaussianOptimum;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL.
 * The pointer stays valid until the next call on this thread.
 */
const char *mbpre_last_error_message(void);

/**
 * Default solver settings.
 */
struct MbpreSolverOptions mbpre_solver_options_default(void);

/**
 * Builds a landscape from a row-major `num_traits x num_envs` matrix of mean offspring numbers.
 *
 * # Safety
 * `mean` must point to `num_traits * num_envs` doubles and `out` must be writable.
 */
enum MbpreStatus mbpre_landscape_new(const double *mean,
                                     size_t num_traits,
                                     size_t num_envs,
                                     struct MbpreLandscape **out);

/**
 * # Safety
 * `l` must be NULL or a handle from [`mbpre_landscape_new`] not yet freed.
 */
void mbpre_landscape_free(struct MbpreLandscape *l);

/**
 * I.i.d. environment with the given marginal law.
 *
 * # Safety
 * `marginal` must point to `num_states` doubles and `out` must be writable.
 */
enum MbpreStatus mbpre_env_iid_new(const double *marginal,
                                   size_t num_states,
                                   struct MbpreEnv **out);

/**
 * Stationary Markov environment with a row-major transition matrix.
 *
 * # Safety
 * `transition` must point to `num_states * num_states` doubles and `out` must be writable.
 */
enum MbpreStatus mbpre_env_markov_new(const double *transition,
                                      size_t num_states,
                                      struct MbpreEnv **out);

/**
 * # Safety
 * `env` must be NULL or a handle from an `mbpre_env_*_new` call not yet freed.
 */
void mbpre_env_free(struct MbpreEnv *env);

/**
 * Growth rate of a strategy that ignores the environment.
 *
 * # Safety
 * Handles must be live, `p` must point to `len` doubles and `rate` must be writable.
 */
enum MbpreStatus mbpre_gamma_no_sensing(const struct MbpreLandscape *l,
                                        const struct MbpreEnv *env,
                                        const double *p,
                                        size_t len,
                                        double *rate);

/**
 * Growth rate of a sensing strategy given as a row-major `num_envs x num_traits` matrix.
 *
 * # Safety
 * Handles must be live, `pbar` must point to `num_envs * num_traits` doubles and `rate` must be writable.
 */
enum MbpreStatus mbpre_gamma_sensing(const struct MbpreLandscape *l,
                                     const struct MbpreEnv *env,
                                     const double *pbar,
                                     double *rate);

/**
 * Optimal strategy without sensing. Check [`mbpre_result_converged`] before trusting it.
 *
 * # Safety
 * Handles must be live, `opts` NULL or valid, and `out` writable.
 */
enum MbpreStatus mbpre_optimize_no_sensing(const struct MbpreLandscape *l,
                                           const struct MbpreEnv *env,
                                           const struct MbpreSolverOptions *opts,
                                           struct MbpreResult **out);

/**
 * Optimal sensing strategy.
 *
 * # Safety
 * As for [`mbpre_optimize_no_sensing`].
 */
enum MbpreStatus mbpre_optimize_sensing(const struct MbpreLandscape *l,
                                        const struct MbpreEnv *env,
                                        const struct MbpreSolverOptions *opts,
                                        struct MbpreResult **out);

/**
 * Optimal rate, or NaN for a NULL handle.
 *
 * # Safety
 * `r` must be NULL or a live result handle.
 */
double mbpre_result_rate(const struct MbpreResult *r);

/**
 * Largest certificate violation of the returned strategy, or NaN for a NULL handle.
 *
 * # Safety
 * `r` must be NULL or a live result handle.
 */
double mbpre_result_certificate_gap(const struct MbpreResult *r);

/**
 * # Safety
 * `r` must be NULL or a live result handle.
 */
bool mbpre_result_converged(const struct MbpreResult *r);

/**
 * Number of doubles in the strategy: `num_traits`, or `num_envs * num_traits` with sensing.
 *
 * # Safety
 * `r` must be NULL or a live result handle.
 */
size_t mbpre_result_strategy_len(const struct MbpreResult *r);

/**
 * Copies the strategy into `buf`, row-major by environment when sensing.
 *
 * # Safety
 * `r` must be live and `buf` must hold `cap` doubles.
 */
enum MbpreStatus mbpre_result_strategy(const struct MbpreResult *r, double *buf, size_t cap);

/**
 * # Safety
 * `r` must be NULL or a result handle not yet freed.
 */
void mbpre_result_free(struct MbpreResult *r);

/**
 * Optimal Gaussian strategies for fitness `c exp(-(t-e)^2 / (2 sigma1_sq))`
 * in a stationary AR(1) environment.
 *
 * # Safety
 * `out` must be writable.
 */
enum MbpreStatus mbpre_gaussian_optimal(double c,
                                        double sigma1_sq,
                                        double env_mean,
                                        double env_variance,
                                        double correlation,
                                        struct MbpreGaussianOptimum *out);

/**
 * Gains of the best mixed strategy over the best pure one and of sensing over not sensing,
 * as functions of `chi = sigma2_sq / sigma1_sq` and the correlation.
 *
 * # Safety
 * `mixed` and `sensing` must be writable.
 */
enum MbpreStatus mbpre_gaussian_gains(double chi, double rho, double *mixed, double *sensing);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MBPRE_H */
