#ifndef POLYKIN_H
#define POLYKIN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum PkStatus {
  PK_STATUS_OK = 0,
  PK_STATUS_NULL_POINTER = 1,
  PK_STATUS_INVALID_ARGUMENT = 2,
  PK_STATUS_CONFIG = 3,
  PK_STATUS_SIMULATION = 4,
  PK_STATUS_BUFFER_TOO_SMALL = 5,
  PK_STATUS_PANIC = 6,
} PkStatus;

typedef enum PkMomentFamily {
  PK_MOMENT_FAMILY_VELOCITY = 0,
  PK_MOMENT_FAMILY_INTERNAL = 1,
  PK_MOMENT_FAMILY_TOTAL = 2,
} PkMomentFamily;

/**
 * Opaque simulation handle.
 */
typedef struct PkSimulation PkSimulation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *pk_version(void);

/**
 * Creates a simulation from a TOML configuration. The initial ensemble is
 * sampled from `[initial]` with `run.n_particles` particles; `run.dt`
 * (absent: the solver default) and `seed` are honoured.
 *
 * # Safety
 * `config_toml` must be a NUL-terminated string and `out` writable.
 */
enum PkStatus pk_simulation_new(const char *config_toml, struct PkSimulation **out);

/**
 * Releases a handle; null is ignored.
 *
 * # Safety
 * `sim` must come from `pk_simulation_new` and not be used afterwards.
 */
void pk_simulation_free(struct PkSimulation *sim);

/**
 * Takes `n_steps` steps of the current time step.
 *
 * # Safety
 * `sim` must be a live handle.
 */
enum PkStatus pk_simulation_step(struct PkSimulation *sim, uint64_t n_steps);

/**
 * Advances by `duration` (absolute time); the last step is shortened to land
 * exactly on the target.
 *
 * # Safety
 * `sim` must be a live handle.
 */
enum PkStatus pk_simulation_advance(struct PkSimulation *sim, double duration);

/**
 * # Safety
 * `sim` must be a live handle and `out` writable.
 */
enum PkStatus pk_simulation_time(struct PkSimulation *sim, double *out);

/**
 * # Safety
 * `sim` must be a live handle and `out` writable.
 */
enum PkStatus pk_simulation_dt(struct PkSimulation *sim, double *out);

/**
 * # Safety
 * `sim` must be a live handle and `out` writable.
 */
enum PkStatus pk_simulation_particle_count(struct PkSimulation *sim, size_t *out);

/**
 * Weighted moment `sum_i w_i <.>^k` of the current ensemble; `family` is a
 * `PkMomentFamily` value.
 *
 * # Safety
 * `sim` must be a live handle and `out` writable.
 */
enum PkStatus pk_simulation_moment(struct PkSimulation *sim,
                                   uint32_t family,
                                   double k,
                                   double *out);

/**
 * Mean collision time of the current ensemble.
 *
 * # Safety
 * `sim` must be a live handle and `out` writable.
 */
enum PkStatus pk_simulation_mean_collision_time(struct PkSimulation *sim, double *out);

/**
 * Accepted collisions so far; `polyatomic` selects the channel.
 *
 * # Safety
 * `sim` must be a live handle and `out` writable.
 */
enum PkStatus pk_simulation_collisions(struct PkSimulation *sim, bool polyatomic, uint64_t *out);

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated).
 * `needed` receives the buffer size required, terminator included.
 *
 * # Safety
 * `buf` must hold `len` bytes (or be null with `len == 0`); `needed` may be null.
 */
enum PkStatus pk_last_error(char *buf, size_t len, size_t *needed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* POLYKIN_H */
