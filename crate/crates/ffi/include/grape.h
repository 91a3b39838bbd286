#ifndef GRAPE_H
#define GRAPE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GrapeStatus {
  GRAPE_STATUS_OK = 0,
  GRAPE_STATUS_NULL_POINTER = 1,
  GRAPE_STATUS_INVALID_ARGUMENT = 2,
  GRAPE_STATUS_NUMERICAL = 3,
  GRAPE_STATUS_BUFFER_TOO_SMALL = 4,
  GRAPE_STATUS_PANIC = 5,
} GrapeStatus;

typedef enum GrapeProblemKind {
  GRAPE_PROBLEM_KIND_IFREDKIN_PLUS = 0,
  GRAPE_PROBLEM_KIND_IFREDKIN_MINUS = 1,
  GRAPE_PROBLEM_KIND_ISWAP_BASELINE = 2,
} GrapeProblemKind;

// Opaque control problem.
typedef struct GrapeProblem GrapeProblem;

// Opaque optimisation outcome.
typedef struct GrapeResult GrapeResult;

typedef struct GrapeOptions {
  double target_fidelity;
  size_t max_iterations;
  size_t restarts;
  uint64_t seed;
} GrapeOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the last error message on this thread into `buf` (NUL
// terminated, truncated to `len`). Returns the full message length.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t grape_last_error(char *buf, size_t len);

// Problem on the default device with the default schedule at
// `gate_time_ns`.
//
// # Safety
// `out` must be a valid pointer to write the handle to.
enum GrapeStatus grape_problem_new(enum GrapeProblemKind kind,
                                   double gate_time_ns,
                                   struct GrapeProblem **out);

// Parses a problem name such as `ifredkin+` and builds it like
// [`grape_problem_new`].
//
// # Safety
// `name` must be a NUL-terminated string; `out` as for
// [`grape_problem_new`].
enum GrapeStatus grape_problem_from_name(const char *name,
                                         double gate_time_ns,
                                         struct GrapeProblem **out);

// # Safety
// `problem` must be null or a handle from [`grape_problem_new`] not yet
// freed.
void grape_problem_free(struct GrapeProblem *problem);

// Length of the decision vector; 0 for a null handle.
//
// # Safety
// `problem` must be null or a live handle.
size_t grape_problem_n_vars(const struct GrapeProblem *problem);

// Fidelity of a decision vector; the gradient is written when `grad` is
// not null.
//
// # Safety
// `x` and a non-null `grad` must each hold `len` values; `fidelity` must
// be writable.
enum GrapeStatus grape_problem_evaluate(const struct GrapeProblem *problem,
                                        const double *x,
                                        size_t len,
                                        double *fidelity,
                                        double *grad);

// Default optimiser settings.
struct GrapeOptions grape_options_default(void);

// Runs the optimiser. The result handle is written even when the target
// is missed; check [`grape_result_fidelity`].
//
// # Safety
// `problem` must be a live handle; `opts` and `out` valid pointers.
enum GrapeStatus grape_optimize(const struct GrapeProblem *problem,
                                const struct GrapeOptions *opts,
                                struct GrapeResult **out);

// # Safety
// `result` must be null or a live handle.
void grape_result_free(struct GrapeResult *result);

// Best fidelity; NaN for a null handle.
//
// # Safety
// `result` must be null or a live handle.
double grape_result_fidelity(const struct GrapeResult *result);

// Total accepted iterations over all restarts.
//
// # Safety
// `result` must be null or a live handle.
size_t grape_result_iterations(const struct GrapeResult *result);

// Copies the best decision vector into `x`.
//
// # Safety
// `x` must hold `len` writable values.
enum GrapeStatus grape_result_pulse(const struct GrapeResult *result, double *x, size_t len);

// GHZ production fidelity of the full propagator under pulse `x`.
//
// # Safety
// As for [`grape_problem_evaluate`].
enum GrapeStatus grape_problem_entangler(const struct GrapeProblem *problem,
                                         const double *x,
                                         size_t len,
                                         double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GRAPE_H */
