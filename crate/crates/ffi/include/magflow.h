#ifndef MAGFLOW_H
#define MAGFLOW_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MagflowStatus {
  MAGFLOW_STATUS_OK = 0,
  MAGFLOW_STATUS_NULL_POINTER = 1,
  /**
   * Invalid configuration, JSON or I/O; CLI exit code 2.
   */
  MAGFLOW_STATUS_CONFIG = 2,
  /**
   * Nonconvergence or collapse; CLI exit code 3.
   */
  MAGFLOW_STATUS_NO_CONVERGENCE = 3,
  /**
   * Any other numerical failure; CLI exit code 4.
   */
  MAGFLOW_STATUS_FAILURE = 4,
  MAGFLOW_STATUS_INVALID_UTF8 = 5,
  MAGFLOW_STATUS_UNKNOWN_COMMAND = 6,
  MAGFLOW_STATUS_BUFFER_TOO_SMALL = 7,
  MAGFLOW_STATUS_PANIC = 8,
} MagflowStatus;

/**
 * Parsed run configuration.
 */
typedef struct MagflowConfig MagflowConfig;

/**
 * A closed orbit found by the free-time action search.
 */
typedef struct MagflowOrbit MagflowOrbit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *magflow_version(void);

/**
 * Message of the last failed call on this thread, or NULL. The pointer stays
 * valid until the next magflow call on the same thread.
 */
const char *magflow_last_error(void);

/**
 * Parse a JSON run configuration.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum MagflowStatus magflow_config_from_json(const char *json, struct MagflowConfig **out);

/**
 * # Safety
 * `cfg` must come from [`magflow_config_from_json`] and not be freed yet.
 */
void magflow_config_free(struct MagflowConfig *cfg);

/**
 * # Safety
 * `cfg` must be a live handle.
 */
enum MagflowStatus magflow_config_set_seed(struct MagflowConfig *cfg, uint64_t seed);

/**
 * Set the loop grid size; it must be even and at least 16.
 *
 * # Safety
 * `cfg` must be a live handle.
 */
enum MagflowStatus magflow_config_set_n(struct MagflowConfig *cfg, size_t n);

/**
 * Run a CLI command without writing files. On success `*exit_code` holds the
 * command's exit code and `*report` a JSON report to release with
 * [`magflow_string_free`].
 *
 * # Safety
 * `cfg` must be a live handle, `command` a NUL-terminated string and the
 * output pointers valid.
 */
enum MagflowStatus magflow_run(const struct MagflowConfig *cfg,
                               const char *command,
                               int32_t *exit_code,
                               char **report);

/**
 * # Safety
 * `s` must come from this library and not be freed yet.
 */
void magflow_string_free(char *s);

/**
 * Mane critical value bracket `[lower, upper]`; `upper` is `+inf` when the
 * magnetic form has no bounded primitive.
 *
 * # Safety
 * `cfg` must be a live handle and the output pointers valid.
 */
enum MagflowStatus magflow_mane_bracket(const struct MagflowConfig *cfg,
                                        double *lower,
                                        double *upper);

/**
 * Search for a closed orbit of winding `(m1, m2)` on the level `k` of the
 * configuration, starting from the straight loop through `(x0, y0)`.
 *
 * # Safety
 * `cfg` must be a live handle and `out` a valid pointer.
 */
enum MagflowStatus magflow_find_orbit(const struct MagflowConfig *cfg,
                                      int32_t m1,
                                      int32_t m2,
                                      double x0,
                                      double y0,
                                      struct MagflowOrbit **out);

/**
 * # Safety
 * `orbit` must come from [`magflow_find_orbit`] and not be freed yet.
 */
void magflow_orbit_free(struct MagflowOrbit *orbit);

/**
 * Period `T`, or NaN for a null handle.
 *
 * # Safety
 * `orbit` must be NULL or a live handle.
 */
double magflow_orbit_period(const struct MagflowOrbit *orbit);

/**
 * Free-time action `S`, or NaN for a null handle.
 *
 * # Safety
 * `orbit` must be NULL or a live handle.
 */
double magflow_orbit_action(const struct MagflowOrbit *orbit);

/**
 * Morse index of the free-time action, or -1 for a null handle.
 *
 * # Safety
 * `orbit` must be NULL or a live handle.
 */
int32_t magflow_orbit_index(const struct MagflowOrbit *orbit);

/**
 * Kernel dimension of the fixed-period Hessian, or -1 for a null handle.
 *
 * # Safety
 * `orbit` must be NULL or a live handle.
 */
int32_t magflow_orbit_nullity(const struct MagflowOrbit *orbit);

/**
 * Number of loop samples, or 0 for a null handle.
 *
 * # Safety
 * `orbit` must be NULL or a live handle.
 */
size_t magflow_orbit_len(const struct MagflowOrbit *orbit);

/**
 * Copy the samples as `x0, y0, x1, y1, ...` into `buf`, which must hold
 * `2 * magflow_orbit_len(orbit)` doubles.
 *
 * # Safety
 * `orbit` must be a live handle and `buf` valid for `len` writes.
 */
enum MagflowStatus magflow_orbit_samples(const struct MagflowOrbit *orbit, double *buf, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MAGFLOW_H */
