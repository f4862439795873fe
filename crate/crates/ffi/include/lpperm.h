#ifndef LPPERM_H
#define LPPERM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LppermStatus {
  LPPERM_STATUS_OK = 0,
  LPPERM_STATUS_NULL_POINTER = 1,
  LPPERM_STATUS_INVALID_ARGUMENT = 2,
  LPPERM_STATUS_PARSE = 3,
  LPPERM_STATUS_NUMERICAL = 4,
  // The solve finished but the outer loop hit its iteration limit.
  LPPERM_STATUS_NOT_CONVERGED = 5,
  // The requested value is not defined (for example a gap without a best known value).
  LPPERM_STATUS_UNAVAILABLE = 6,
  LPPERM_STATUS_PANIC = 7,
} LppermStatus;

typedef enum LppermVariant {
  LPPERM_VARIANT_LP = 0,
  LPPERM_VARIANT_LP_CP = 1,
  LPPERM_VARIANT_LP_NEGPROX = 2,
  LPPERM_VARIANT_LP_CP_NEGPROX = 3,
  LPPERM_VARIANT_L2 = 4,
} LppermVariant;

// Solver and enhancement parameters.
typedef struct LppermConfig LppermConfig;

// A scaled QAP instance.
typedef struct LppermInstance LppermInstance;

// Outcome of a solve.
typedef struct LppermResult LppermResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the
// next failing call on the same thread.
const char *lpperm_last_error(void);

// Builds an instance from two row-major `n x n` matrices.
//
// # Safety
// `a` and `b` must point to `n * n` readable doubles; `out` must be writable.
enum LppermStatus lpperm_instance_new(size_t n,
                                      const double *a,
                                      const double *b,
                                      struct LppermInstance **out);

// Parses QAPLIB text (`n`, then `A`, then `B`).
//
// # Safety
// `text` must be a NUL-terminated string; `out` must be writable.
enum LppermStatus lpperm_instance_from_qaplib(const char *text, struct LppermInstance **out);

// Sets the best known objective used for gap reporting.
//
// # Safety
// `inst` must come from an `lpperm_instance_*` constructor.
enum LppermStatus lpperm_instance_set_best_known(struct LppermInstance *inst, double obj_best);

// # Safety
// `inst` must be null or come from an `lpperm_instance_*` constructor, and
// must not be used afterwards.
void lpperm_instance_free(struct LppermInstance *inst);

// Default parameters.
struct LppermConfig *lpperm_config_new(void);

// Sets one parameter by its field name (`p`, `eps0`, `max_inner`, `seed`,
// `timing`, `k_max`, `mu0`, `c1`, `omega`, ...). Counts must be
// non-negative integers; booleans take 0 or 1.
//
// # Safety
// `cfg` must come from [`lpperm_config_new`]; `key` must be NUL-terminated.
enum LppermStatus lpperm_config_set(struct LppermConfig *cfg, const char *key, double value);

// # Safety
// `cfg` must be null or come from [`lpperm_config_new`], and must not be used afterwards.
void lpperm_config_free(struct LppermConfig *cfg);

// Solves `inst` with the given variant. On [`LppermStatus::Ok`] and
// [`LppermStatus::NotConverged`] a result is stored in `out`.
//
// # Safety
// `inst` and `cfg` must be live handles; `out` must be writable.
enum LppermStatus lpperm_solve(const struct LppermInstance *inst,
                               const struct LppermConfig *cfg,
                               enum LppermVariant variant,
                               struct LppermResult **out);

// Objective of the best permutation, in the instance's original units.
//
// # Safety
// `res` must be a live result handle.
double lpperm_result_objective(const struct LppermResult *res);

// Percentage gap to the best known value.
//
// # Safety
// `res` must be a live result handle; `gap` must be writable.
enum LppermStatus lpperm_result_gap(const struct LppermResult *res, double *gap);

// Number of objective evaluations.
//
// # Safety
// `res` must be a live result handle.
size_t lpperm_result_nfe(const struct LppermResult *res);

// Copies the 0-based best permutation (`perm[j]` is the row of the one in
// column `j`) into `perm`, which holds `len` entries; `len` must equal `n`.
//
// # Safety
// `res` must be a live result handle; `perm` must hold `len` writable entries.
enum LppermStatus lpperm_result_permutation(const struct LppermResult *res,
                                            size_t *perm,
                                            size_t len);

// # Safety
// `res` must be null or a live result handle, and must not be used afterwards.
void lpperm_result_free(struct LppermResult *res);

// Euclidean projection of the row-major `n x n` matrix `c` onto the doubly
// stochastic matrices, written to `out`.
//
// # Safety
// `c` must hold `n * n` readable doubles and `out` `n * n` writable ones.
enum LppermStatus lpperm_project(size_t n, const double *c, double tol, double *out);

// Bandwidth minimization of the undirected graph with `n_edges` 0-based
// edges `(rows[e], cols[e])`. Writes the bandwidth to `bw` and the ordering
// to `perm` (`n` entries): `perm[k]` is the 0-based vertex placed at position `k`.
//
// # Safety
// `rows`/`cols` must hold `n_edges` entries, `perm` `n` writable entries;
// `cfg` must be a live config handle and `bw` writable.
enum LppermStatus lpperm_bandwidth(size_t n,
                                   size_t n_edges,
                                   const size_t *rows,
                                   const size_t *cols,
                                   const struct LppermConfig *cfg,
                                   enum LppermVariant variant,
                                   size_t *bw,
                                   size_t *perm);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LPPERM_H */
