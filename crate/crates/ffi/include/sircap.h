#ifndef SIRCAP_H
#define SIRCAP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SircapStatus {
  SircapStatus_Ok = 0,
  SircapStatus_NullPointer = 1,
  SircapStatus_InvalidParams = 2,
  SircapStatus_Infeasible = 3,
  SircapStatus_Numerical = 4,
  SircapStatus_Domain = 5,
  SircapStatus_Panic = 6,
} SircapStatus;

/**
 * Case of the optimal control, encoded as tens and units of its label
 * (for example 21 for case 2.1).
 */
typedef enum SircapCase {
  SircapCase_Case11 = 11,
  SircapCase_Case12 = 12,
  SircapCase_Case13 = 13,
  SircapCase_Case14 = 14,
  SircapCase_Case21 = 21,
  SircapCase_Case22 = 22,
  SircapCase_Case23 = 23,
} SircapCase;

/**
 * Problem instance.
 */
typedef struct SircapParams SircapParams;

/**
 * Solved policy.
 */
typedef struct SircapPolicy SircapPolicy;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *sircap_last_error_message(void);

/**
 * Creates a validated problem instance.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for a handle.
 */
enum SircapStatus sircap_params_new(double gamma,
                                    double sigma_s,
                                    double sigma_f,
                                    double horizon,
                                    double tau,
                                    double cap,
                                    double x0,
                                    double y0,
                                    struct SircapParams **out);

/**
 * Reference scenario (gamma 0.1, sigma_s 0.8, sigma_f 1.5, T 365, one case in a million).
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for a handle.
 */
enum SircapStatus sircap_params_reference(double cap, double tau, struct SircapParams **out);

/**
 * # Safety
 * `params` must be null or a handle from `sircap_params_new` not yet freed.
 */
void sircap_params_free(struct SircapParams *params);

/**
 * Solves the capped problem with RK4 step `step` (0 selects the default).
 *
 * # Safety
 * `params` must be a live handle and `out` valid writable storage.
 */
enum SircapStatus sircap_solve(const struct SircapParams *params,
                               double step,
                               struct SircapPolicy **out);

/**
 * # Safety
 * `policy` must be null or a handle from `sircap_solve` not yet freed.
 */
void sircap_policy_free(struct SircapPolicy *policy);

/**
 * Hold entry `t1`, strict start `t2` and strict duration `mu`.
 *
 * # Safety
 * `policy` must be a live handle; the outputs must be valid writable pointers.
 */
enum SircapStatus sircap_policy_times(const struct SircapPolicy *policy,
                                      double *t1,
                                      double *t2,
                                      double *mu);

/**
 * Final susceptible fraction reached by the policy.
 *
 * # Safety
 * `policy` must be a live handle and `out` a valid writable pointer.
 */
enum SircapStatus sircap_policy_x_inf(const struct SircapPolicy *policy, double *out);

/**
 * # Safety
 * `policy` must be a live handle and `out` a valid writable pointer.
 */
enum SircapStatus sircap_policy_case(const struct SircapPolicy *policy, enum SircapCase *out);

/**
 * Whether every feasibility and hypothesis check passed.
 *
 * # Safety
 * `policy` must be a live handle and `out` a valid writable pointer.
 */
enum SircapStatus sircap_policy_verified(const struct SircapPolicy *policy, bool *out);

/**
 * Principal branch of the Lambert W function.
 *
 * # Safety
 * `out` must be a valid writable pointer.
 */
enum SircapStatus sircap_lambert_w0(double z, double *out);

/**
 * Final susceptible fraction from state `(x, y)` under constant `sigma`.
 *
 * # Safety
 * `out` must be a valid writable pointer.
 */
enum SircapStatus sircap_x_infinity(double x, double y, double sigma, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SIRCAP_H */
