/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef FLOWERLAB_H
#define FLOWERLAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum FlStatus {
  FL_STATUS_OK = 0,
  FL_STATUS_NULL_POINTER = 1,
  FL_STATUS_INVALID_ARGUMENT = 2,
  FL_STATUS_DEGENERATE_GERM = 3,
  FL_STATUS_INVALID_GERM = 4,
  FL_STATUS_LATTICE = 5,
  FL_STATUS_OUTSIDE_DOMAIN = 6,
  FL_STATUS_NO_CONVERGENCE = 7,
  FL_STATUS_CALIBRATION_FAILED = 8,
  FL_STATUS_PRECONDITION_VIOLATED = 9,
  FL_STATUS_CONFIG = 10,
  FL_STATUS_IO = 11,
  FL_STATUS_PANIC = 12,
} FlStatus;

/**
 * Classification kinds.
 */
typedef enum FlLabelKind {
  FL_LABEL_KIND_FIXED_SET = 0,
  FL_LABEL_KIND_OMEGA_PLUS = 1,
  FL_LABEL_KIND_OMEGA_MINUS = 2,
  FL_LABEL_KIND_ESCAPED = 3,
  FL_LABEL_KIND_UNDETERMINED = 4,
} FlLabelKind;

/**
 * Opaque germ handle.
 */
typedef struct FlGerm FlGerm;

/**
 * Opaque handle to forward and backward petals of a germ.
 */
typedef struct FlPetals FlPetals;

/**
 * Calibrated petal parameters.
 */
typedef struct FlPetalSpec {
  double epsilon;
  double theta;
  double gamma;
  double delta;
  double delta_prime;
  double r;
} FlPetalSpec;

typedef struct FlLabel {
  enum FlLabelKind kind;
  /**
   * Petal index for `OmegaPlus` / `OmegaMinus`, otherwise 0.
   */
  uint32_t ell;
  uint64_t steps;
} FlLabel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t fl_last_error(char *buf, size_t len);

/**
 * Creates the germ `f_i(x) = x_i (1 + x^M a_i)` and normalizes it so that
 * `<a, M> = -1`.
 *
 * # Safety
 * `multi_index` points to `n` values, `a` to `2n` doubles, `out` is writable.
 */
enum FlStatus fl_germ_new_model(size_t n,
                                const uint32_t *multi_index,
                                const double *a,
                                struct FlGerm **out);

/**
 * Builds a germ from the `[germ]` section of a TOML experiment document.
 *
 * # Safety
 * `toml` is a NUL-terminated string, `out` is writable.
 */
enum FlStatus fl_germ_from_toml(const char *toml, struct FlGerm **out);

/**
 * # Safety
 * `germ` is null or a handle from this library that has not been freed.
 */
void fl_germ_free(struct FlGerm *germ);

/**
 * Dimension of the germ, or 0 for a null handle.
 *
 * # Safety
 * `germ` is null or a live handle.
 */
size_t fl_germ_dim(const struct FlGerm *germ);

/**
 * Evaluates `f(x)`; `x` and `out` hold `2n` doubles.
 *
 * # Safety
 * Pointers are valid for `2n` doubles, `germ` is a live handle.
 */
enum FlStatus fl_germ_evaluate(const struct FlGerm *germ, const double *x, double *out);

/**
 * Evaluates `f^{-1}(y)` by Newton's method to relative accuracy `tol`.
 *
 * # Safety
 * Pointers are valid for `2n` doubles, `germ` is a live handle.
 */
enum FlStatus fl_germ_evaluate_inverse(const struct FlGerm *germ,
                                       const double *y,
                                       double tol,
                                       double *out);

/**
 * Calibrates forward and backward petals with default settings and the
 * given seed.
 *
 * # Safety
 * `germ` is a live handle, `out` is writable.
 */
enum FlStatus fl_petals_calibrate(const struct FlGerm *germ, uint64_t seed, struct FlPetals **out);

/**
 * # Safety
 * `petals` is null or a live handle.
 */
void fl_petals_free(struct FlPetals *petals);

/**
 * Number of petals `d = gcd(M)`, or 0 for a null handle.
 *
 * # Safety
 * `petals` is null or a live handle.
 */
uint64_t fl_petals_count(const struct FlPetals *petals);

/**
 * Forward (`backward == 0`) or backward petal parameters.
 *
 * # Safety
 * `petals` is a live handle, `out` is writable.
 */
enum FlStatus fl_petals_spec(const struct FlPetals *petals,
                             int32_t backward,
                             struct FlPetalSpec *out);

/**
 * Classifies `x` (`2n` doubles) by forward then backward capture.
 *
 * # Safety
 * `petals` is a live handle, `x` holds `2n` doubles, `out` is writable.
 */
enum FlStatus fl_classify(const struct FlPetals *petals,
                          const double *x,
                          uint64_t forward_budget,
                          uint64_t backward_budget,
                          struct FlLabel *out);

/**
 * `ψ_I(x)` on petal `ell` for the integer index `I` (`n` entries). Writes
 * the value to `out` (2 doubles) and the error bound to `tail_bound`.
 *
 * # Safety
 * `petals` is a live handle; `x` holds `2n` doubles, `index` `n` values,
 * `out` 2 doubles; `tail_bound` is writable.
 */
enum FlStatus fl_psi(const struct FlPetals *petals,
                     const double *x,
                     const int64_t *index,
                     uint32_t ell,
                     double tol,
                     double *out,
                     double *tail_bound);

/**
 * Unimodular completion of `M` (`n` entries): writes `d`, and the `n × n`
 * row-major matrices 𝓜 and 𝓝 = 𝓜⁻¹.
 *
 * # Safety
 * `multi_index` holds `n` values, `m_mat` and `n_mat` `n²` values, `d` is
 * writable.
 */
enum FlStatus fl_lattice_completion(size_t n,
                                    const uint32_t *multi_index,
                                    uint64_t *d,
                                    int64_t *m_mat,
                                    int64_t *n_mat);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FLOWERLAB_H */
