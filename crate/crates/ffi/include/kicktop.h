#ifndef KICKTOP_H
#define KICKTOP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

enum KtStatus
#if defined(__cplusplus) || __STDC_VERSION__ >= 202311L
  : int32_t
#endif // defined(__cplusplus) || __STDC_VERSION__ >= 202311L
 {
  KT_STATUS_OK = 0,
  KT_STATUS_INVALID_PARAMETER = 1,
  /**
   * The mean-field island pair does not exist at these parameters.
   */
  KT_STATUS_NO_ISLANDS = 2,
  KT_STATUS_NUMERICAL = 3,
  KT_STATUS_NULL_POINTER = 4,
  KT_STATUS_BUFFER_TOO_SMALL = 5,
  /**
   * A Rust panic was caught at the boundary; this is a bug.
   */
  KT_STATUS_PANIC = 6,
};
#ifndef __cplusplus
#if __STDC_VERSION__ >= 202311L
typedef enum KtStatus KtStatus;
#else
typedef int32_t KtStatus;
#endif // __STDC_VERSION__ >= 202311L
#endif // __cplusplus

enum KtValidity
#if defined(__cplusplus) || __STDC_VERSION__ >= 202311L
  : int32_t
#endif // defined(__cplusplus) || __STDC_VERSION__ >= 202311L
 {
  KT_VALIDITY_VALID = 0,
  /**
   * Doublet found but the two-state picture is poor.
   */
  KT_VALIDITY_GAP = 1,
  KT_VALIDITY_NO_ISLAND = 2,
};
#ifndef __cplusplus
#if __STDC_VERSION__ >= 202311L
typedef enum KtValidity KtValidity;
#else
typedef int32_t KtValidity;
#endif // __STDC_VERSION__ >= 202311L
#endif // __cplusplus

/**
 * Values accepted by [`kt_propagator_new`].
 */
enum KtInitialState
#if defined(__cplusplus) || __STDC_VERSION__ >= 202311L
  : int32_t
#endif // defined(__cplusplus) || __STDC_VERSION__ >= 202311L
 {
  /**
   * Coherent state on the southern island.
   */
  KT_INITIAL_STATE_MINUS = 0,
  /**
   * Coherent state on the northern island.
   */
  KT_INITIAL_STATE_PLUS = 1,
  /**
   * All particles in well 1.
   */
  KT_INITIAL_STATE_NORTH = 2,
};
#ifndef __cplusplus
#if __STDC_VERSION__ >= 202311L
typedef enum KtInitialState KtInitialState;
#else
typedef int32_t KtInitialState;
#endif // __STDC_VERSION__ >= 202311L
#endif // __cplusplus

typedef struct KtPropagator KtPropagator;

typedef struct KtSpectrum KtSpectrum;

typedef struct KtParams {
  size_t n;
  double c_scaled;
  double v;
  double tau;
  double epsilon;
} KtParams;

/**
 * Doublet summary; NaN where undefined (no islands), `t_tunnel` infinite at
 * an exact crossing.
 */
typedef struct KtTunneling {
  KtValidity validity;
  double eps_plus;
  double eps_minus;
  double delta_eps;
  double t_tunnel;
  double overlap_plus;
  double overlap_minus;
  double third_overlap;
  double t_c;
} KtTunneling;

/**
 * One stroboscopic sample; `l*` are divided by `l = N/2`.
 */
typedef struct KtSample {
  size_t kick;
  double lx;
  double ly;
  double lz;
  double p_plus;
  double p_minus;
  double p_orth;
  double norm;
} KtSample;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL after a
 * successful one. Valid until the next call into the library.
 */
const char *kt_last_error(void);

const char *kt_version(void);

/**
 * Symmetric trap with `v = tau = 1`.
 */
struct KtParams kt_params_default(size_t n, double c_scaled);

/**
 * Diagonalizes the Floquet operator at `params`.
 *
 * # Safety
 * `params` must point to a valid `KtParams`, `out` to writable storage.
 */
KtStatus kt_spectrum_new(const struct KtParams *params, struct KtSpectrum **out);

/**
 * Number of levels, `N + 1`; 0 for a null handle.
 *
 * # Safety
 * `spectrum` must be null or a live handle.
 */
size_t kt_spectrum_len(const struct KtSpectrum *spectrum);

/**
 * Copies the quasi-energies, sorted by parity sector and then ascending.
 *
 * # Safety
 * `buf` must hold `len` doubles.
 */
KtStatus kt_spectrum_quasienergies(const struct KtSpectrum *spectrum, double *buf, size_t len);

/**
 * Copies the parities: +1 even, -1 odd, 0 when the trap is asymmetric.
 *
 * # Safety
 * `buf` must hold `len` ints.
 */
KtStatus kt_spectrum_parities(const struct KtSpectrum *spectrum, int32_t *buf, size_t len);

/**
 * # Safety
 * `spectrum` must be null or a handle from [`kt_spectrum_new`] not yet freed.
 */
void kt_spectrum_free(struct KtSpectrum *spectrum);

/**
 * Tunneling doublet at one point. A missing island pair is not an error:
 * the result then has `validity == NoIsland`.
 *
 * # Safety
 * `params` and `out` must be valid pointers.
 */
KtStatus kt_tunneling(const struct KtParams *params, struct KtTunneling *out);

/**
 * Tunneling over `len` values of `c_scaled` (strictly increasing), with the
 * other parameters from `base`. Points are evaluated in parallel; results are
 * independent of the thread count.
 *
 * # Safety
 * `c_scaled` must hold `len` doubles and `out` room for `len` results.
 */
KtStatus kt_sweep_c(const struct KtParams *base,
                    const double *c_scaled,
                    size_t len,
                    struct KtTunneling *out);

/**
 * Mean-field orbit from `(theta, phi)` on the sphere of radius `(N + 1)/2`:
 * `n_kicks + 1` points written to `xyz` as consecutive `(sx, sy, sz)`.
 *
 * # Safety
 * `xyz` must hold `len` doubles.
 */
KtStatus kt_mean_field_orbit(const struct KtParams *params,
                             double theta,
                             double phi,
                             size_t n_kicks,
                             double *xyz,
                             size_t len);

/**
 * Quantum propagator starting from one of the [`KtInitialState`] values.
 * Island populations are reported as NaN when the islands do not exist.
 *
 * # Safety
 * `params` must be valid, `out` writable.
 */
KtStatus kt_propagator_new(const struct KtParams *params,
                           int32_t initial_state,
                           struct KtPropagator **out);

/**
 * Records the current state and the next `n_kicks` (so `n_kicks + 1`
 * samples) and leaves the propagator `n_kicks` further on. Kick numbers
 * continue across calls; the first sample repeats the last of the previous call.
 *
 * # Safety
 * `prop` must be a live handle and `samples` hold `len` entries.
 */
KtStatus kt_propagator_run(struct KtPropagator *prop,
                           size_t n_kicks,
                           struct KtSample *samples,
                           size_t len);

/**
 * # Safety
 * `prop` must be null or a handle from [`kt_propagator_new`] not yet freed.
 */
void kt_propagator_free(struct KtPropagator *prop);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KICKTOP_H */
