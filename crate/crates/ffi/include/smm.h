#ifndef SMM_H
#define SMM_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Result of every call.
typedef enum SmmStatus {
  SMM_STATUS_OK = 0,
  SMM_STATUS_INVALID_PARAMETER = 1,
  SMM_STATUS_PHASE_SINGULARITY = 2,
  SMM_STATUS_BRANCH_POINT = 3,
  SMM_STATUS_UNWRAP_FAILURE = 4,
  SMM_STATUS_SERIES_DIVERGES = 5,
  SMM_STATUS_PRECISION_EXHAUSTED = 6,
  SMM_STATUS_RATIONAL_TERMINATION = 7,
  SMM_STATUS_OVERFLOW_BUDGET = 8,
  SMM_STATUS_NO_QUALIFYING_INDEX = 9,
  SMM_STATUS_SOLVER_FAILURE = 10,
  SMM_STATUS_IO = 11,
  SMM_STATUS_NULL_POINTER = 12,
  SMM_STATUS_INVALID_UTF8 = 13,
  SMM_STATUS_PANIC = 14,
} SmmStatus;

// `0` for the full space, `1` for the half space `x ≥ 0`.
typedef enum SmmGeometry {
  SMM_GEOMETRY_FULL = 0,
  SMM_GEOMETRY_HALF = 1,
} SmmGeometry;

// Continued-fraction expansion of a frequency.
typedef struct SmmContinuedFraction SmmContinuedFraction;

// Model parameters `(λ, α, θ, geometry)`.
typedef struct SmmModel SmmModel;

// Sorted list of energies with optional integer labels.
typedef struct SmmSpectrum SmmSpectrum;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or an empty string.
// The pointer stays valid until the next call on the same thread.
const char *smm_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *smm_version(void);

// Creates model parameters with `d` frequencies.
//
// # Safety
// `alpha` must point to `d` doubles; `out` must be a valid pointer.
enum SmmStatus smm_model_new(double lambda,
                             const double *alpha,
                             size_t d,
                             double theta,
                             enum SmmGeometry geometry,
                             struct SmmModel **out_model);

// Releases a model; null is ignored.
//
// # Safety
// `model` must come from [`smm_model_new`] and not be used afterwards.
void smm_model_free(struct SmmModel *model);

// `v(n) = tan π(α·n + θ)` at a surface site of length `d`.
//
// # Safety
// `model` must be valid, `n` must point to `d` integers and `out_v` to a double.
enum SmmStatus smm_model_surface_function(const struct SmmModel *model,
                                          const int64_t *n,
                                          size_t d,
                                          double *out_v);

// Surface symbol `Γ̂₀(y; z)` (full space) or `Γ̂₀⁺(y; z)` (half space).
//
// # Safety
// `y` must point to `d` doubles; the out pointers must be valid.
enum SmmStatus smm_surface_symbol(const double *y,
                                  size_t d,
                                  double z_re,
                                  double z_im,
                                  enum SmmGeometry geometry,
                                  double *out_re,
                                  double *out_im);

// Rotation number `ζ₀(E)` for `d = 1` at real `E` outside `[−4, 4]`.
//
// # Safety
// `out_zeta0` must be a valid pointer.
enum SmmStatus smm_zeta0(double energy,
                         double lambda,
                         enum SmmGeometry geometry,
                         size_t grid,
                         double *out_zeta0);

// Eigenvalues predicted by the quantization condition for labels `k_min..=k_max`
// in `(e_lo, e_hi)`, `d = 1`.
//
// # Safety
// `out_spectrum` must be a valid pointer.
enum SmmStatus smm_predict(double lambda,
                           double alpha,
                           double theta,
                           enum SmmGeometry geometry,
                           int64_t k_min,
                           int64_t k_max,
                           double e_lo,
                           double e_hi,
                           struct SmmSpectrum **out_spectrum);

// Eigenvalues of the box truncation of radius `l` in `(e_lo, e_hi)`.
// Labels are the surface centre of each eigenvector (first component).
//
// # Safety
// `model` and `out_spectrum` must be valid pointers.
enum SmmStatus smm_fv_eigenvalues(const struct SmmModel *model,
                                  int64_t l,
                                  double e_lo,
                                  double e_hi,
                                  struct SmmSpectrum **out_spectrum);

// Number of entries.
//
// # Safety
// `spectrum` and `out_len` must be valid pointers.
enum SmmStatus smm_spectrum_len(const struct SmmSpectrum *spectrum, size_t *out_len);

// Entry `i`: its energy and label.
//
// # Safety
// `spectrum` must be valid; `out_energy` and `out_label` may be null.
enum SmmStatus smm_spectrum_get(const struct SmmSpectrum *spectrum,
                                size_t i,
                                double *out_energy,
                                int64_t *out_label);

// Releases a spectrum; null is ignored.
//
// # Safety
// `spectrum` must come from this library and not be used afterwards.
void smm_spectrum_free(struct SmmSpectrum *spectrum);

// Largest relative deviation between the box resolvent and the surface-reduction
// formula on the interior block.
//
// # Safety
// `model` and `out_error` must be valid pointers.
enum SmmStatus smm_resolvent_check(const struct SmmModel *model,
                                   int64_t l,
                                   int64_t w,
                                   double z_re,
                                   double z_im,
                                   double *out_error);

// Expands a frequency descriptor (`golden`, `silver`, `quotients:…`, `beta:1.0`, a
// decimal) to `depth` partial quotients with exact integers.
//
// # Safety
// `alpha` must be a NUL-terminated string; `out_cf` must be a valid pointer.
enum SmmStatus smm_cf_expand(const char *alpha,
                             size_t depth,
                             uint64_t budget_bits,
                             struct SmmContinuedFraction **out_cf);

// Depth, growth index and exactness of the identities `q_{n+1}p_n − p_{n+1}q_n = ±1`
// and `1/(q_{n+1}+q_n) < Δ_n < 1/q_{n+1}`.
//
// # Safety
// `cf` must be valid; any out pointer may be null.
enum SmmStatus smm_cf_summary(const struct SmmContinuedFraction *cf,
                              size_t *out_depth,
                              double *out_beta_estimate,
                              bool *out_identities_hold);

// The expansion as JSON. Release the string with [`smm_string_free`].
//
// # Safety
// `cf` and `out_json` must be valid pointers.
enum SmmStatus smm_cf_to_json(const struct SmmContinuedFraction *cf, char **out_json);

// Releases an expansion; null is ignored.
//
// # Safety
// `cf` must come from [`smm_cf_expand`] and not be used afterwards.
void smm_cf_free(struct SmmContinuedFraction *cf);

// Releases a string returned by this library; null is ignored.
//
// # Safety
// `s` must come from this library and not be used afterwards.
void smm_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SMM_H */
