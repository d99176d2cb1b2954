#ifndef CAMLAB_H
#define CAMLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CamlabStatus {
  CAMLAB_STATUS_OK = 0,
  CAMLAB_STATUS_NULL_POINTER = 1,
  CAMLAB_STATUS_INVALID_ARGUMENT = 2,
  CAMLAB_STATUS_IO = 3,
  CAMLAB_STATUS_PARSE = 4,
  /**
   * The model is not solvable as asked (infeasible LP, limit hit, ...).
   */
  CAMLAB_STATUS_SOLVER = 5,
  CAMLAB_STATUS_PANIC = 6,
} CamlabStatus;

typedef enum CamlabPolicy {
  CAMLAB_POLICY_FSB = 0,
  CAMLAB_POLICY_MOST_FRACTIONAL = 1,
  CAMLAB_POLICY_PSEUDOCOST = 2,
  CAMLAB_POLICY_RANDOM = 3,
  /**
   * Requires a model handle.
   */
  CAMLAB_POLICY_LEARNED = 4,
} CamlabPolicy;

typedef enum CamlabSearchStatus {
  CAMLAB_SEARCH_STATUS_OPTIMAL_PROVED = 0,
  CAMLAB_SEARCH_STATUS_INFEASIBLE = 1,
  CAMLAB_SEARCH_STATUS_TIME_LIMIT = 2,
  CAMLAB_SEARCH_STATUS_NODE_LIMIT = 3,
} CamlabSearchStatus;

/**
 * Opaque MILP instance.
 */
typedef struct CamlabInstance CamlabInstance;

/**
 * Opaque trained policy network.
 */
typedef struct CamlabModel CamlabModel;

/**
 * Outcome of [`camlab_solve`].
 */
typedef struct CamlabSolveSummary {
  enum CamlabSearchStatus status;
  /**
   * Best objective found; `+inf` without an incumbent.
   */
  double objective;
  uint64_t nodes;
  uint64_t lp_solves;
  /**
   * Deterministic work units spent.
   */
  uint64_t work;
} CamlabSolveSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on this thread.
 */
const char *camlab_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *camlab_version(void);

/**
 * Generates a desk-scale instance of `family` (`setcover`, `cauctions`,
 * `facilities`, `indset`).
 *
 * # Safety
 * `family` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum CamlabStatus camlab_instance_generate(const char *family,
                                           uint64_t seed,
                                           struct CamlabInstance **out);

/**
 * Reads an instance JSON file.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum CamlabStatus camlab_instance_load(const char *path, struct CamlabInstance **out);

/**
 * # Safety
 * `inst` must be a live handle and `path` a valid NUL-terminated string.
 */
enum CamlabStatus camlab_instance_save(const struct CamlabInstance *inst, const char *path);

/**
 * # Safety
 * `inst` must be null or a handle not freed before.
 */
void camlab_instance_free(struct CamlabInstance *inst);

/**
 * Number of variables, or 0 for a null handle.
 *
 * # Safety
 * `inst` must be null or a live handle.
 */
uintptr_t camlab_instance_num_vars(const struct CamlabInstance *inst);

/**
 * Number of constraints, or 0 for a null handle.
 *
 * # Safety
 * `inst` must be null or a live handle.
 */
uintptr_t camlab_instance_num_cons(const struct CamlabInstance *inst);

/**
 * Builds the instance shifted by `shift[0..len]`; `len` must equal the
 * variable count and integer variables need integral entries.
 *
 * # Safety
 * `inst` must be a live handle, `shift` must point to `len` doubles and
 * `out` must be a valid pointer.
 */
enum CamlabStatus camlab_instance_shift(const struct CamlabInstance *inst,
                                        const double *shift,
                                        uintptr_t len,
                                        struct CamlabInstance **out);

/**
 * Solves the LP relaxation. Writes the objective (with constant) and, when
 * `x` is non-null, the `len` = variable-count solution entries.
 *
 * # Safety
 * `inst` must be a live handle, `objective` a valid pointer and `x` null or
 * writable for `len` doubles.
 */
enum CamlabStatus camlab_lp_solve(const struct CamlabInstance *inst,
                                  double *x,
                                  uintptr_t len,
                                  double *objective);

/**
 * Compares the LP relaxations of `inst` and its shift. `passed` receives
 * whether solution, objective, duals, reduced costs and basis all agree
 * within `tol`.
 *
 * # Safety
 * `inst` must be a live handle, `shift` must point to `len` doubles and
 * `passed` must be a valid pointer.
 */
enum CamlabStatus camlab_verify_shift(const struct CamlabInstance *inst,
                                      const double *shift,
                                      uintptr_t len,
                                      double tol,
                                      bool *passed);

/**
 * Reads a model JSON file written by `camlab train`.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum CamlabStatus camlab_model_load(const char *path, struct CamlabModel **out);

/**
 * Model with freshly initialized weights, mostly for testing.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum CamlabStatus camlab_model_init(uintptr_t hidden, uint64_t seed, struct CamlabModel **out);

/**
 * # Safety
 * `model` must be null or a handle not freed before.
 */
void camlab_model_free(struct CamlabModel *model);

/**
 * Runs branch and bound. `model` is only read for `Learned`; a zero limit
 * means none. Time is measured in deterministic work seconds.
 *
 * # Safety
 * `inst` must be a live handle, `model` null or a live handle, and `out`
 * a valid pointer.
 */
enum CamlabStatus camlab_solve(const struct CamlabInstance *inst,
                               enum CamlabPolicy policy,
                               uint64_t seed,
                               const struct CamlabModel *model,
                               uint64_t node_limit,
                               double time_limit,
                               struct CamlabSolveSummary *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CAMLAB_H */
