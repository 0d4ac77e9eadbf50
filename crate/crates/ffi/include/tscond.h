/* Generated by cbindgen; do not edit. */

#ifndef TSCOND_H
#define TSCOND_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum TscondArch {
  TSCOND_ARCH_LINEAR = 0,
  TSCOND_ARCH_MLP = 1,
} TscondArch;

/**
 * Which half of a split to copy out.
 */
typedef enum TscondPart {
  TSCOND_PART_TRAIN = 0,
  TSCOND_PART_TEST = 1,
} TscondPart;

typedef enum TscondStatus {
  TSCOND_STATUS_OK = 0,
  TSCOND_STATUS_NULL_ARGUMENT = 1,
  TSCOND_STATUS_INVALID_ARGUMENT = 2,
  TSCOND_STATUS_IO = 3,
  TSCOND_STATUS_PARSE = 4,
  TSCOND_STATUS_DATA = 5,
  TSCOND_STATUS_SHAPE = 6,
  TSCOND_STATUS_NUMERIC = 7,
  TSCOND_STATUS_BUFFER_FORMAT = 8,
  TSCOND_STATUS_FINGERPRINT_MISMATCH = 9,
  TSCOND_STATUS_PANIC = 10,
} TscondStatus;

typedef struct TscondBuffer TscondBuffer;

/**
 * A time series: raw data, one half of a split, or a synthetic series.
 */
typedef struct TscondSeries TscondSeries;

/**
 * Train/test halves plus their normalization statistics.
 */
typedef struct TscondSplit TscondSplit;

typedef struct TscondBufferParams {
  size_t experts;
  size_t epochs;
  double learning_rate;
  size_t batch_size;
  size_t kernel;
  uint64_t seed;
} TscondBufferParams;

typedef struct TscondCondenseParams {
  size_t epochs;
  size_t gap;
  double beta;
  size_t unroll_steps;
  double alpha;
  /**
   * 0 means the horizon of the buffer.
   */
  size_t pair_stride;
  double outer_lr;
  double outer_momentum;
  size_t synthetic_len;
  bool condtsf;
  uint64_t seed;
} TscondCondenseParams;

typedef struct TscondEvalParams {
  enum TscondArch arch;
  size_t kernel;
  size_t hidden;
  size_t trials;
  size_t steps;
  double learning_rate;
  uint64_t seed;
} TscondEvalParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *tscond_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *tscond_version(void);

/**
 * Loads a CSV with a header row. `date_column` may be null; when given and
 * present in the header, that column is dropped.
 *
 * # Safety
 * `path` and a non-null `date_column` must be NUL-terminated strings; `out` must be writable.
 */
enum TscondStatus tscond_series_load_csv(const char *path,
                                         const char *date_column,
                                         struct TscondSeries **out);

/**
 * Copies `rows * cols` row-major values into a new series with channels named `ch0`, `ch1`, ...
 *
 * # Safety
 * `values` must point to `rows * cols` doubles; `out` must be writable.
 */
enum TscondStatus tscond_series_from_values(const double *values,
                                            size_t rows,
                                            size_t cols,
                                            struct TscondSeries **out);

/**
 * # Safety
 * `series` must be a live handle; `rows` and `cols` must be writable.
 */
enum TscondStatus tscond_series_shape(const struct TscondSeries *series,
                                      size_t *rows,
                                      size_t *cols);

/**
 * Copies the values row-major into `out`, which must hold `rows * cols` doubles.
 *
 * # Safety
 * `series` must be a live handle; `out` must point to `len` writable doubles.
 */
enum TscondStatus tscond_series_copy_values(const struct TscondSeries *series,
                                            double *out,
                                            size_t len);

/**
 * # Safety
 * `series` must be null or a handle not yet freed.
 */
void tscond_series_free(struct TscondSeries *series);

/**
 * Chronological split at `floor(ratio * T)` with train-statistics z-scoring.
 *
 * # Safety
 * `series` must be a live handle; `out` must be writable.
 */
enum TscondStatus tscond_split_normalize(const struct TscondSeries *series,
                                         double ratio,
                                         size_t lookback,
                                         size_t horizon,
                                         bool strict,
                                         struct TscondSplit **out);

/**
 * Copies one half of a split into a new series handle.
 *
 * # Safety
 * `split` must be a live handle; `out` must be writable.
 */
enum TscondStatus tscond_split_part(const struct TscondSplit *split,
                                    enum TscondPart part,
                                    struct TscondSeries **out);

/**
 * # Safety
 * `split` must be null or a handle not yet freed.
 */
void tscond_split_free(struct TscondSplit *split);

struct TscondBufferParams tscond_buffer_params_default(void);

/**
 * Trains `params.experts` linear experts on the train half of `split`.
 *
 * # Safety
 * `split` must be a live handle, `params` readable and `out` writable.
 */
enum TscondStatus tscond_buffer_generate(const struct TscondSplit *split,
                                         size_t lookback,
                                         size_t horizon,
                                         const struct TscondBufferParams *params,
                                         struct TscondBuffer **out);

/**
 * # Safety
 * `buffer` must be a live handle and `path` a NUL-terminated string.
 */
enum TscondStatus tscond_buffer_save(const struct TscondBuffer *buffer, const char *path);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum TscondStatus tscond_buffer_load(const char *path, struct TscondBuffer **out);

/**
 * Number of expert pairs; 0 for a null handle.
 *
 * # Safety
 * `buffer` must be null or a live handle.
 */
size_t tscond_buffer_len(const struct TscondBuffer *buffer);

/**
 * # Safety
 * `buffer` must be null or a handle not yet freed.
 */
void tscond_buffer_free(struct TscondBuffer *buffer);

struct TscondCondenseParams tscond_condense_params_default(void);

/**
 * Distills the train half of `split` with `buffer`. The final label error
 * is written to `final_label_error` when it is not null.
 *
 * # Safety
 * Handles must be live, `params` readable, `out` writable.
 */
enum TscondStatus tscond_distill(const struct TscondBuffer *buffer,
                                 const struct TscondSplit *split,
                                 const struct TscondCondenseParams *params,
                                 struct TscondSeries **out,
                                 double *final_label_error);

/**
 * One in-place label update of `series` towards expert `expert`'s forecasts.
 *
 * # Safety
 * Handles must be live.
 */
enum TscondStatus tscond_condtsf_update(struct TscondSeries *series,
                                        const struct TscondBuffer *buffer,
                                        size_t expert,
                                        double beta);

/**
 * # Safety
 * Handles must be live and `out` writable.
 */
enum TscondStatus tscond_label_error(const struct TscondSeries *series,
                                     const struct TscondBuffer *buffer,
                                     size_t expert,
                                     double *out);

struct TscondEvalParams tscond_eval_params_default(void);

/**
 * Trains `params.trials` fresh models and reports mean test MAE and MSE.
 * With a null `synthetic`, models train on the whole train half instead.
 *
 * # Safety
 * `split` must be live, `synthetic` null or live, outputs writable.
 */
enum TscondStatus tscond_evaluate(const struct TscondSeries *synthetic,
                                  const struct TscondSplit *split,
                                  size_t lookback,
                                  size_t horizon,
                                  const struct TscondEvalParams *params,
                                  double *mean_mae,
                                  double *mean_mse);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TSCOND_H */
