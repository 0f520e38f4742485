#ifndef HYBRID_SQP_H
#define HYBRID_SQP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Return codes shared by all fallible entry points.
typedef enum HsqpStatus {
  HSQP_STATUS_OK = 0,
  HSQP_STATUS_NULL_POINTER = 1,
  HSQP_STATUS_INVALID_UTF8 = 2,
  HSQP_STATUS_INVALID_CONFIG = 3,
  HSQP_STATUS_DIMENSION_MISMATCH = 4,
  HSQP_STATUS_NUMERICAL_FAILURE = 5,
  // The solve ran but ended with a failing termination; the report is still returned.
  HSQP_STATUS_SOLVER_FAILURE = 6,
  HSQP_STATUS_BUFFER_TOO_SMALL = 7,
  HSQP_STATUS_IO = 8,
  HSQP_STATUS_PANIC = 9,
} HsqpStatus;

typedef enum HsqpTermination {
  HSQP_TERMINATION_CONVERGED = 0,
  HSQP_TERMINATION_MU_FLOOR = 1,
  HSQP_TERMINATION_ITER_CAP = 2,
  HSQP_TERMINATION_LINE_SEARCH_FAILURE = 3,
  HSQP_TERMINATION_NON_DESCENT = 4,
  HSQP_TERMINATION_SOLVER_FAILURE = 5,
} HsqpTermination;

// Opaque experiment configuration.
typedef struct HsqpConfig HsqpConfig;

// Opaque result of one solve.
typedef struct HsqpReport HsqpReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *hsqp_version(void);

// Message for the last failing call on this thread, or NULL. The pointer is
// valid until the next library call on the same thread.
const char *hsqp_last_error(void);

// Default configuration (HIV problem, exact backend).
struct HsqpConfig *hsqp_config_default(void);

// Parses a TOML experiment document into `*out`.
//
// # Safety
// `toml` must be a NUL-terminated string and `out` a valid pointer.
enum HsqpStatus hsqp_config_from_toml(const char *toml, struct HsqpConfig **out);

// # Safety
// `cfg` must come from this library and not be used afterwards. NULL is ignored.
void hsqp_config_free(struct HsqpConfig *cfg);

// Sets the problem: `hiv` or `toy:<name>`.
//
// # Safety
// `cfg` must be a live handle and `name` a NUL-terminated string.
enum HsqpStatus hsqp_config_set_problem(struct HsqpConfig *cfg, const char *name);

// Sets the step backend: `exact`, `noisy:<eps>` or `quantum`.
//
// # Safety
// `cfg` must be a live handle and `kind` a NUL-terminated string.
enum HsqpStatus hsqp_config_set_solver(struct HsqpConfig *cfg, const char *kind);

// # Safety
// `cfg` must be a live handle.
enum HsqpStatus hsqp_config_set_seed(struct HsqpConfig *cfg, uint64_t seed);

// Runs one solve. On `Ok` or `SolverFailure` `*out` holds a report that the
// caller must free; on other codes it is NULL.
//
// # Safety
// `cfg` must be a live handle and `out` a valid pointer.
enum HsqpStatus hsqp_solve(const struct HsqpConfig *cfg, struct HsqpReport **out);

// # Safety
// `report` must come from this library and not be used afterwards. NULL is ignored.
void hsqp_report_free(struct HsqpReport *report);

// Termination reason; `SolverFailure` for a NULL handle.
//
// # Safety
// `report` must be a live handle or NULL.
enum HsqpTermination hsqp_report_termination(const struct HsqpReport *report);

// Accepted steps; 0 for a NULL handle.
//
// # Safety
// `report` must be a live handle or NULL.
size_t hsqp_report_iterations(const struct HsqpReport *report);

// Objective at the final iterate; NaN for a NULL handle.
//
// # Safety
// `report` must be a live handle or NULL.
double hsqp_report_objective(const struct HsqpReport *report);

// Length of the final decision vector; 0 for a NULL handle.
//
// # Safety
// `report` must be a live handle or NULL.
size_t hsqp_report_solution_len(const struct HsqpReport *report);

// Copies the final decision vector into `buf[0..len]`.
//
// # Safety
// `report` must be a live handle and `buf` valid for `len` writes.
enum HsqpStatus hsqp_report_solution(const struct HsqpReport *report, double *buf, size_t len);

// Exact solve of `[Q Aᵀ; A 0][dz; λ] = [−g; r]` by Schur elimination.
// Matrices are column-major: `q` is `n×n`, `a` is `m×n`.
//
// # Safety
// Every pointer must be valid for the lengths implied by `n` and `m`.
enum HsqpStatus hsqp_exact_step(size_t n,
                                size_t m,
                                const double *q,
                                const double *a,
                                const double *g,
                                const double *r,
                                double *dz,
                                double *lambda);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HYBRID_SQP_H */
