#ifndef PROXYPROBE_H
#define PROXYPROBE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

// Status codes returned by every fallible call.
typedef enum PpStatus {
  PP_STATUS_OK = 0,
  PP_STATUS_NULL_POINTER = 1,
  PP_STATUS_INVALID_ARGUMENT = 2,
  PP_STATUS_DIMENSION_MISMATCH = 3,
  PP_STATUS_DATA = 4,
  PP_STATUS_FIT = 5,
  PP_STATUS_NUMERIC = 6,
  PP_STATUS_METRIC = 7,
  PP_STATUS_CORRELATION = 8,
  PP_STATUS_PANIC = 9,
  PP_STATUS_OTHER = 10,
} PpStatus;

// How the p-value of a correlation was obtained.
typedef enum PpPValueMethod {
  PP_P_VALUE_METHOD_EXACT = 0,
  PP_P_VALUE_METHOD_MONTE_CARLO = 1,
} PpPValueMethod;

// Opaque fitted linear probe.
typedef struct PpLpModel PpLpModel;

// Opaque fitted Mahalanobis model.
typedef struct PpMdModel PpMdModel;

// Linear-probe hyperparameters. Obtain defaults from [`pp_lp_default_hyper`].
typedef struct PpLpHyper {
  double lr;
  size_t epochs;
  double l2;
  size_t classes;
} PpLpHyper;

// Spearman correlation with its two-sided permutation p-value.
typedef struct PpCorrelation {
  double rho;
  double p_value;
  enum PpPValueMethod method;
  // Non-zero when either input contains ties.
  uint8_t ties_present;
} PpCorrelation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on this thread, or NULL if none.
const char *pp_last_error(void);

// Forgets the stored error message for this thread.
void pp_clear_error(void);

// Static, NUL-terminated name of a status code; "unknown" for other values.
const char *pp_status_name(int32_t status);

// Library version, static and NUL-terminated.
const char *pp_version(void);

struct PpLpHyper pp_lp_default_hyper(void);

// Fits a softmax probe on `rows × cols` features with class labels in
// `0..hyper.classes`. Class 1 is the anomaly class. `hyper` may be NULL for
// the defaults.
//
// # Safety
// Pointers must reference arrays of the stated sizes; `out` must be writable.
enum PpStatus pp_lp_fit(const double *features,
                        size_t rows,
                        size_t cols,
                        const uint32_t *labels,
                        const struct PpLpHyper *hyper,
                        struct PpLpModel **out);

// Writes one anomaly-class probability per row into `scores`.
//
// # Safety
// `model` must come from [`pp_lp_fit`]; `scores` must hold `rows` doubles.
enum PpStatus pp_lp_score(const struct PpLpModel *model,
                          const double *features,
                          size_t rows,
                          size_t cols,
                          double *scores);

// Feature dimension the probe was fit on, or 0 for NULL.
//
// # Safety
// `model` must be NULL or come from [`pp_lp_fit`].
size_t pp_lp_dims(const struct PpLpModel *model);

// # Safety
// `model` must be NULL or come from [`pp_lp_fit`] and not be freed twice.
void pp_lp_free(struct PpLpModel *model);

// Fits the normal-data Gaussian. `epsilon < 0` selects the automatic
// regularization; otherwise `epsilon` is added to the covariance diagonal.
//
// # Safety
// `features` must hold `rows × cols` doubles; `out` must be writable.
enum PpStatus pp_md_fit(const double *features,
                        size_t rows,
                        size_t cols,
                        double epsilon,
                        struct PpMdModel **out);

// Writes one squared Mahalanobis distance per row into `scores`.
//
// # Safety
// `model` must come from [`pp_md_fit`]; `scores` must hold `rows` doubles.
enum PpStatus pp_md_score(const struct PpMdModel *model,
                          const double *features,
                          size_t rows,
                          size_t cols,
                          double *scores);

// Regularization actually applied during the fit, or NaN for NULL.
//
// # Safety
// `model` must be NULL or come from [`pp_md_fit`].
double pp_md_epsilon(const struct PpMdModel *model);

// # Safety
// `model` must be NULL or come from [`pp_md_fit`].
size_t pp_md_dims(const struct PpMdModel *model);

// # Safety
// `model` must be NULL or come from [`pp_md_fit`] and not be freed twice.
void pp_md_free(struct PpMdModel *model);

// ROC-AUC in `[0, 1]` with ties counted as one half.
//
// # Safety
// Arrays must hold the stated counts; `out` must be writable.
enum PpStatus pp_auc(const double *scores_normal,
                     size_t n_normal,
                     const double *scores_anomaly,
                     size_t n_anomaly,
                     double *out);

// Scale-invariant signal-to-distortion ratio in dB.
//
// # Safety
// Both arrays must hold `n` doubles; `out` must be writable.
enum PpStatus pp_si_sdr(const double *target, const double *estimate, size_t n, double *out);

// SI-SDR of `estimate` minus SI-SDR of `mixture`, both against `target`.
//
// # Safety
// All arrays must hold `n` doubles; `out` must be writable.
enum PpStatus pp_si_sdr_improvement(const double *target,
                                    const double *estimate,
                                    const double *mixture,
                                    size_t n,
                                    double *out);

// Spearman ρ with a two-sided permutation p-value: exhaustive when
// `n ≤ exact_limit`, otherwise `mc_draws` seeded random permutations.
//
// # Safety
// Both arrays must hold `n` doubles; `out` must be writable.
enum PpStatus pp_spearman(const double *x,
                          const double *y,
                          size_t n,
                          size_t exact_limit,
                          size_t mc_draws,
                          uint64_t seed,
                          struct PpCorrelation *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PROXYPROBE_H */
