/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef NINN_H
#define NINN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum NinnStatus {
  NINN_STATUS_OK = 0,
  NINN_STATUS_NULL_POINTER = 1,
  NINN_STATUS_INVALID_ARGUMENT = 2,
  NINN_STATUS_DIMENSION_MISMATCH = 3,
  NINN_STATUS_DIVERGENCE = 4,
  NINN_STATUS_IO = 5,
  NINN_STATUS_CORRUPT_FILE = 6,
  NINN_STATUS_VERSION_MISMATCH = 7,
  NINN_STATUS_SCHEDULE_MISMATCH = 8,
  NINN_STATUS_PANIC = 9,
} NinnStatus;

// Opaque trained system.
typedef struct NinnSystem NinnSystem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *ninn_version(void);

// Message of the last failed call on this thread, empty after a success.
// Valid until the next call into the library on this thread.
const char *ninn_last_error(void);

// Loads a model file. On success `*out` owns a new handle.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum NinnStatus ninn_system_load(const char *path, struct NinnSystem **out);

// Releases a handle; null is ignored.
//
// # Safety
// `system` must come from [`ninn_system_load`] and not be used afterwards.
void ninn_system_free(struct NinnSystem *system);

// State dimension of the system, 0 for null.
//
// # Safety
// `system` must be null or a live handle.
size_t ninn_system_state_dim(const struct NinnSystem *system);

// Network depth `L` of the system, 0 for null.
//
// # Safety
// `system` must be null or a live handle.
size_t ninn_system_depth(const struct NinnSystem *system);

// One uncontrolled step: `out = S(w)`. Both buffers have `len` entries.
//
// # Safety
// `w` and `out` must point to `len` doubles.
enum NinnStatus ninn_system_forward(const struct NinnSystem *system,
                                    const double *w,
                                    size_t len,
                                    double *out);

// NINN Type 1 step. `obs[j]` is the observation of component
// `observed[j]`; `observed` must be strictly increasing.
//
// # Safety
// `w` and `out` point to `len` doubles; `observed` and `obs` to
// `n_observed` entries.
enum NinnStatus ninn_type1_step(const struct NinnSystem *system,
                                const double *w,
                                size_t len,
                                const size_t *observed,
                                const double *obs,
                                size_t n_observed,
                                double mu,
                                double *out);

// NINN Type 2 (scalar-output case) step; `lookahead != 0` measures the
// misfit through the remaining layers.
//
// # Safety
// As [`ninn_type1_step`].
enum NinnStatus ninn_type2_step(const struct NinnSystem *system,
                                const double *w,
                                size_t len,
                                const size_t *observed,
                                const double *obs,
                                size_t n_observed,
                                double mu,
                                int lookahead,
                                double *out);

// Direct Observation step: observed input components are replaced by
// `obs` before the forward pass. Pass `n_observed = 0` for a plain step.
//
// # Safety
// As [`ninn_type1_step`].
enum NinnStatus ninn_direct_obs_step(const struct NinnSystem *system,
                                     const double *w,
                                     size_t len,
                                     const size_t *observed,
                                     const double *obs,
                                     size_t n_observed,
                                     double *out);

// `argmin_{‖x‖ ≤ 1} ‖W(y + x) − q‖²` for a `rows × cols` row-major `W`.
// `y` and `out` have `cols` entries, `q` has `rows`.
//
// # Safety
// Buffers must have the stated lengths.
enum NinnStatus ninn_case2_direction(const double *w,
                                     size_t rows,
                                     size_t cols,
                                     const double *y,
                                     const double *q,
                                     double *out);

// Spatio-temporal RMSE over checkpoints `k0..=k_end`. `alg` and `reference`
// are `n_runs × n_checkpoints × dim` arrays in C order. Writes `+inf`
// when any contributing value is non-finite.
//
// # Safety
// `alg` and `reference` point to `n_runs · n_checkpoints · dim` doubles,
// `out` to one.
enum NinnStatus ninn_rmse(const double *alg,
                          const double *reference,
                          size_t n_runs,
                          size_t n_checkpoints,
                          size_t dim,
                          size_t k0,
                          size_t k_end,
                          double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NINN_H */
