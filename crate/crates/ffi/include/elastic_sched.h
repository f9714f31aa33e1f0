#ifndef ELASTIC_SCHED_H
#define ELASTIC_SCHED_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Policy selector: Inelastic-First.
 */
#define ES_POLICY_INELASTIC_FIRST 0

/**
 * Policy selector: Elastic-First.
 */
#define ES_POLICY_ELASTIC_FIRST 1

/**
 * Status code of a C ABI call.
 */
typedef enum {
  EsStatus_Ok = 0,
  /**
   * A required pointer argument was null.
   */
  EsStatus_NullPointer = 1,
  /**
   * Arguments failed validation (rates, counts, policy selector).
   */
  EsStatus_InvalidArgument = 2,
  /**
   * The requested quantity needs load < 1 (or a stable subsystem).
   */
  EsStatus_Unstable = 3,
  /**
   * The computation failed internally (fit, solver, or simulation).
   */
  EsStatus_ComputeFailed = 4,
} EsStatus;

/**
 * Opaque system parameters handle.
 */
typedef struct EsParams EsParams;

/**
 * Mean response times: overall and per class.
 */
typedef struct {
  double t;
  double t_i;
  double t_e;
} EsResponseTimes;

/**
 * Steady-state simulation estimates with 95% confidence half-widths.
 */
typedef struct {
  double mean_n;
  double mean_n_i;
  double mean_n_e;
  double mean_t;
  double mean_t_i;
  double mean_t_e;
  double mean_w;
  double mean_w_i;
  double mean_w_e;
  double ci_n;
  double ci_n_i;
  double ci_n_e;
  double ci_t;
  double ci_t_i;
  double ci_t_e;
  double ci_w;
  double ci_w_i;
  double ci_w_e;
} EsSimStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates a parameters handle. Arrival rates may be zero; service rates
 * must be positive and `k >= 1`. On success writes the handle to `out`.
 *
 * # Safety
 * `out` must be a valid pointer. The returned handle must be released with
 * [`es_params_free`] exactly once.
 */
EsStatus es_params_new(double lambda_i,
                       double lambda_e,
                       double mu_i,
                       double mu_e,
                       uint32_t k,
                       EsParams **out);

/**
 * Releases a handle created by [`es_params_new`]. Null is a no-op.
 *
 * # Safety
 * `params` must be null or a handle returned by [`es_params_new`] that has
 * not been freed yet.
 */
void es_params_free(EsParams *params);

/**
 * System load `lambda_I/(k mu_I) + lambda_E/(k mu_E)`.
 *
 * # Safety
 * `params` must be a live [`es_params_new`] handle and `out` valid.
 */
EsStatus es_load(const EsParams *params, double *out);

/**
 * Mean response time of an M/M/1 queue.
 *
 * # Safety
 * `out` must be valid.
 */
EsStatus es_mm1_mean_response(double lambda, double mu, double *out);

/**
 * Mean response time of an M/M/k queue (Erlang-C).
 *
 * # Safety
 * `out` must be valid.
 */
EsStatus es_mmk_mean_response(double lambda, double mu, uint32_t k, double *out);

/**
 * First three raw moments of the M/M/1 busy period.
 *
 * # Safety
 * `m1`, `m2`, `m3` must be valid.
 */
EsStatus es_busy_period_moments(double lambda, double mu, double *m1, double *m2, double *m3);

/**
 * Mean response times under Inelastic-First from the matrix-analytic
 * solution.
 *
 * # Safety
 * `params` must be a live handle and `out` valid.
 */
EsStatus es_mean_response_if(const EsParams *params, EsResponseTimes *out);

/**
 * Mean response times under Elastic-First from the matrix-analytic
 * solution.
 *
 * # Safety
 * `params` must be a live handle and `out` valid.
 */
EsStatus es_mean_response_ef(const EsParams *params, EsResponseTimes *out);

/**
 * Closed-form totals of the two-server counterexample (start state
 * 2 inelastic + 1 elastic, `mu_E = 2 mu_I`, no arrivals).
 *
 * # Safety
 * `total_if` and `total_ef` must be valid.
 */
EsStatus es_counterexample_values(double mu_i, double *total_if, double *total_ef);

/**
 * Least negative-drift margin `epsilon` of the Lyapunov certificate over
 * the `[0, i_max] x [0, j_max]` rectangle.
 *
 * # Safety
 * `params` must be a live handle and `epsilon` valid.
 */
EsStatus es_drift_certificate(const EsParams *params,
                              uint32_t policy,
                              uint64_t i_max,
                              uint64_t j_max,
                              double *epsilon);

/**
 * Steady-state simulation with the given event budget per replication.
 * Replication `r` uses seed `seed xor r`.
 *
 * # Safety
 * `params` must be a live handle and `out` valid.
 */
EsStatus es_simulate_ctmc(const EsParams *params,
                          uint32_t policy,
                          uint64_t events_per_replication,
                          uint32_t replications,
                          uint64_t seed,
                          EsSimStats *out);

/**
 * Monte-Carlo estimate of the expected sum of response times when the
 * system starts with the given job counts and no further arrivals
 * (requires zero arrival rates in `params`).
 *
 * # Safety
 * `params` must be a live handle; `mean` and `ci_halfwidth` valid.
 */
EsStatus es_transient_total_response(const EsParams *params,
                                     uint32_t policy,
                                     uint64_t inelastic,
                                     uint64_t elastic,
                                     uint64_t replications,
                                     uint64_t seed,
                                     double *mean,
                                     double *ci_halfwidth);

/**
 * Static name of a status code, for diagnostics.
 */
const char *es_status_name(EsStatus status);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ELASTIC_SCHED_H */
