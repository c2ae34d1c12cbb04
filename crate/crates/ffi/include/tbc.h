#ifndef TBC_H
#define TBC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. The first five match the exit codes of the `tbc` tool.
 */
typedef enum {
  TBC_STATUS_OK = 0,
  /**
   * A required pointer was null or a string was not UTF-8.
   */
  TBC_STATUS_INVALID_ARGUMENT = 1,
  TBC_STATUS_CONFIG = 2,
  TBC_STATUS_OPERATOR_MISMATCH = 3,
  TBC_STATUS_NUMERICAL = 4,
  TBC_STATUS_IO = 5,
  /**
   * Caller buffer too small; nothing written.
   */
  TBC_STATUS_BUFFER_TOO_SMALL = 6,
  TBC_STATUS_PANIC = 7,
} TbcStatus;

/**
 * Parsed run configuration.
 */
typedef struct TbcConfig TbcConfig;

/**
 * Precomputed boundary operator; shareable between solvers.
 */
typedef struct TbcOperator TbcOperator;

/**
 * A march in progress.
 */
typedef struct TbcSolver TbcSolver;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message, NUL-terminated, into
 * `buf`. Returns the message length without the terminator; when that is
 * `>= len` the message was truncated. `buf` may be null when `len` is 0.
 *
 * # Safety
 * `buf` must point to `len` writable bytes.
 */
size_t tbc_last_error(char *buf, size_t len);

/**
 * Parses configuration text. Relative paths resolve against the current
 * directory.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be writable.
 */
TbcStatus tbc_config_parse(const char *text, TbcConfig **out);

/**
 * Reads a configuration file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
TbcStatus tbc_config_load(const char *path, TbcConfig **out);

/**
 * Writes the canonical text of `cfg` into `buf` (NUL-terminated) and its
 * length into `needed`. With a short buffer nothing is written and
 * `BufferTooSmall` is returned.
 *
 * # Safety
 * `cfg` must be a live handle, `buf` must point to `len` writable bytes
 * and `needed` must be writable.
 */
TbcStatus tbc_config_canonical(const TbcConfig *cfg, char *buf, size_t len, size_t *needed);

/**
 * Steps and spatial intervals of `cfg`.
 *
 * # Safety
 * `cfg` must be a live handle; the outputs must be writable.
 */
TbcStatus tbc_config_dims(const TbcConfig *cfg, size_t *steps, size_t *intervals);

/**
 * # Safety
 * `cfg` must be null or a handle from this library, not yet freed.
 */
void tbc_config_free(TbcConfig *cfg);

/**
 * Builds the boundary operator for `cfg`.
 *
 * # Safety
 * `cfg` must be a live handle; `out` must be writable.
 */
TbcStatus tbc_operator_precompute(const TbcConfig *cfg, TbcOperator **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
TbcStatus tbc_operator_load(const char *path, TbcOperator **out);

/**
 * # Safety
 * `op` must be a live handle and `path` a NUL-terminated string.
 */
TbcStatus tbc_operator_save(const TbcOperator *op, const char *path);

/**
 * Step count and compressed-to-dense block storage ratio.
 *
 * # Safety
 * `op` must be a live handle; the outputs must be writable.
 */
TbcStatus tbc_operator_info(const TbcOperator *op, size_t *steps, double *storage_ratio);

/**
 * # Safety
 * `op` must be null or a handle from this library, not yet freed.
 * Solvers created from it stay valid.
 */
void tbc_operator_free(TbcOperator *op);

/**
 * Starts a march. `mode` is 0 for the butterfly operator (then `op` is
 * required and must match `cfg`), 1 for direct rows and 2 for Dirichlet
 * walls at `boundary.L`. In Dirichlet mode the state covers
 * `[-L, L]`.
 *
 * # Safety
 * `cfg` must be a live handle, `op` null or a live handle and `out`
 * writable.
 */
TbcStatus tbc_solver_new(const TbcConfig *cfg,
                         const TbcOperator *op,
                         uint32_t mode,
                         TbcSolver **out);

/**
 * Advances up to `steps` steps, stopping at the final time; the number
 * taken goes to `taken` when it is not null.
 *
 * # Safety
 * `solver` must be a live handle not used concurrently.
 */
TbcStatus tbc_solver_step(TbcSolver *solver, size_t steps, size_t *taken);

/**
 * Current step index and time.
 *
 * # Safety
 * `solver` must be a live handle; the outputs must be writable.
 */
TbcStatus tbc_solver_progress(const TbcSolver *solver, size_t *step, double *t);

/**
 * Copies the current state into `re` and `im`, each of length `len`,
 * which must equal the node count (written to `points`).
 *
 * # Safety
 * `solver` must be a live handle, `re` and `im` must point to `len`
 * writable doubles and `points` must be writable.
 */
TbcStatus tbc_solver_state(const TbcSolver *solver,
                           double *re,
                           double *im,
                           size_t len,
                           size_t *points);

/**
 * # Safety
 * `solver` must be null or a handle from this library, not yet freed.
 */
void tbc_solver_free(TbcSolver *solver);

/**
 * Runs `cfg` to completion as `tbc run` would, writing outputs into
 * `out_dir`. `ops_path` may be null; the butterfly operator is then
 * built in process.
 *
 * # Safety
 * `cfg` must be a live handle; the strings must be NUL-terminated.
 */
TbcStatus tbc_run(const TbcConfig *cfg, const char *ops_path, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TBC_H */
