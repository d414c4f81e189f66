#ifndef BSGL_H
#define BSGL_H

#pragma once

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code of every fallible call.
 */
typedef enum BsglStatus {
  BSGL_STATUS_OK = 0,
  BSGL_STATUS_NULL_POINTER = 1,
  BSGL_STATUS_INVALID_ARGUMENT = 2,
  BSGL_STATUS_DATA_ERROR = 3,
  BSGL_STATUS_RUNTIME_ERROR = 4,
  BSGL_STATUS_INDEX_OUT_OF_RANGE = 5,
  BSGL_STATUS_BUFFER_TOO_SMALL = 6,
} BsglStatus;

/**
 * Opaque dataset handle.
 */
typedef struct BsglDataset BsglDataset;

/**
 * Opaque fitted-model handle.
 */
typedef struct BsglFit BsglFit;

/**
 * Plain-old-data fit configuration. `grid_q = 0` evaluates surfaces at the
 * observed training locations; any positive value requests a regular
 * grid_q x grid_q grid. Obtain defaults via [`bsgl_fit_options_default`].
 */
typedef struct BsglFitOptions {
  /**
   * Total basis count; must be a perfect square.
   */
  size_t l;
  size_t degree;
  double a_sigma;
  double b_sigma;
  double a_lambda;
  double b_lambda;
  size_t n_iter;
  size_t warmup;
  size_t n_chains;
  double ci_level;
  uint64_t seed;
  bool include_intercept;
  /**
   * Held-out fraction in [0, 1); 0 disables the holdout.
   */
  double test_fraction;
  size_t grid_q;
  double rhat_threshold;
} BsglFitOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Thread-local message for the most recent failure on this thread. The
 * pointer stays valid until the next failing call from the same thread.
 */
const char *bsgl_last_error(void);

/**
 * Library defaults mirroring the CLI: L = 25 cubic basis, 4 chains of
 * 5000 sweeps with 500 warm-up, 95% intervals, 20% holdout.
 *
 * # Safety
 * `out` must be a valid pointer to uninitialized or writable memory.
 */
enum BsglStatus bsgl_fit_options_default(struct BsglFitOptions *out);

/**
 * Read a dataset from a headered CSV with columns u, v, y and one column
 * per predictor. Rows with non-finite values are dropped.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be a valid pointer.
 * The returned handle must be released with [`bsgl_dataset_free`].
 */
enum BsglStatus bsgl_dataset_read_csv(const char *path, struct BsglDataset **out);

/**
 * Generate a synthetic dataset with three spatially varying signal
 * surfaces. `constant_c` of NaN leaves predictor 4 as pure noise.
 *
 * # Safety
 * `out` must be a valid pointer; free the handle with [`bsgl_dataset_free`].
 */
enum BsglStatus bsgl_dataset_simulate(size_t n,
                                      size_t m,
                                      uint64_t seed,
                                      double noise_var,
                                      double constant_c,
                                      struct BsglDataset **out);

/**
 * Number of rows in the dataset; 0 for a null handle.
 *
 * # Safety
 * `dataset` must be null or a live handle from this library.
 */
size_t bsgl_dataset_rows(const struct BsglDataset *dataset);

/**
 * Number of predictor columns; 0 for a null handle.
 *
 * # Safety
 * `dataset` must be null or a live handle from this library.
 */
size_t bsgl_dataset_predictors(const struct BsglDataset *dataset);

/**
 * Release a dataset handle (null is a no-op).
 *
 * # Safety
 * `dataset` must have come from this library and not be freed twice.
 */
void bsgl_dataset_free(struct BsglDataset *dataset);

/**
 * Run the full fit pipeline on a dataset.
 *
 * # Safety
 * `dataset`, `options`, and `out` must be valid pointers. The returned
 * handle must be released with [`bsgl_fit_free`].
 */
enum BsglStatus bsgl_fit_run(const struct BsglDataset *dataset,
                             const struct BsglFitOptions *options,
                             struct BsglFit **out);

/**
 * Number of predictor groups in the fit (includes the intercept group when
 * one was requested); 0 for a null handle.
 *
 * # Safety
 * `fit` must be null or a live handle from this library.
 */
size_t bsgl_fit_groups(const struct BsglFit *fit);

/**
 * Spatial coverage probability of one predictor group.
 *
 * # Safety
 * `fit` and `out` must be valid pointers.
 */
enum BsglStatus bsgl_fit_scp(const struct BsglFit *fit, size_t group, double *out);

/**
 * Copy the NUL-terminated group name into `buf`.
 *
 * # Safety
 * `fit` must be valid and `buf` must point to at least `cap` bytes.
 */
enum BsglStatus bsgl_fit_group_name(const struct BsglFit *fit, size_t group, char *buf, size_t cap);

/**
 * Held-out mean squared prediction error; NaN when the fit had no holdout.
 *
 * # Safety
 * `fit` and `out` must be valid pointers.
 */
enum BsglStatus bsgl_fit_mspe(const struct BsglFit *fit, double *out);

/**
 * Worst split R-hat across parameters; NaN for single-chain fits.
 *
 * # Safety
 * `fit` and `out` must be valid pointers.
 */
enum BsglStatus bsgl_fit_worst_rhat(const struct BsglFit *fit, double *out);

/**
 * Write the full artifact set (surfaces, significance, SCP, convergence,
 * predictions, manifest) into `out_dir`.
 *
 * # Safety
 * `fit` must be valid; `out_dir` must be a NUL-terminated string.
 */
enum BsglStatus bsgl_fit_write_results(const struct BsglFit *fit,
                                       const char *out_dir,
                                       bool save_samples);

/**
 * Release a fit handle (null is a no-op).
 *
 * # Safety
 * `fit` must have come from [`bsgl_fit_run`] and not be freed twice.
 */
void bsgl_fit_free(struct BsglFit *fit);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BSGL_H */
