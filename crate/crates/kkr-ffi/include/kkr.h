/* C interface of the kkr library: Koopman kernel regression for LTI forecasting. */

#ifndef KKR_H
#define KKR_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible call.
typedef enum KkrStatus {
  KKR_OK = 0,
  KKR_INVALID_ARGUMENT = 1,
  KKR_PARSE_ERROR = 2,
  KKR_NUMERIC_ERROR = 3,
  KKR_IO_ERROR = 4,
  KKR_NULL_POINTER = 5,
  KKR_PANIC = 6,
} KkrStatus;

// Opaque dataset handle.
typedef struct KkrDataset KkrDataset;

// Opaque fitted-model handle.
typedef struct KkrModel KkrModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Last error message of the calling thread; valid until the next failing
// call on the same thread. Never null.
const char *kkr_last_error_message(void);

// Loads a dataset from a CSV file (`traj_id,t,x0,...,y` schema).
//
// # Safety
// `path` must be a valid NUL-terminated string; `out` must be a valid
// pointer to receive the handle.
enum KkrStatus kkr_dataset_load_csv(const char *path, struct KkrDataset **out);

// Simulates a dataset from a JSON configuration holding `system` and
// `data` sections (the CLI schema).
//
// # Safety
// `config_json` must be a valid NUL-terminated string; `out` must be a
// valid pointer to receive the handle.
enum KkrStatus kkr_dataset_simulate_json(const char *config_json, struct KkrDataset **out);

// Writes a dataset as CSV.
//
// # Safety
// `dataset` must be a live handle from this library; `path` a valid
// NUL-terminated string.
enum KkrStatus kkr_dataset_save_csv(const struct KkrDataset *dataset, const char *path);

// Shape of a dataset: trajectories, steps, state dimension, sample step.
//
// # Safety
// `dataset` must be a live handle; the out pointers may be null when the
// corresponding value is not needed.
enum KkrStatus kkr_dataset_info(const struct KkrDataset *dataset,
                                size_t *n,
                                size_t *horizon,
                                size_t *state_dim,
                                double *dt);

// Frees a dataset handle (null is a no-op).
//
// # Safety
// `dataset` must be null or a handle obtained from this library that has
// not been freed yet.
void kkr_dataset_free(struct KkrDataset *dataset);

// Fits a KKR model on a dataset. The JSON configuration must hold the
// `kernel`, `spectrum` and `kkr` sections of the CLI schema.
//
// # Safety
// `dataset` must be a live handle, `config_json` a valid NUL-terminated
// string and `out` a valid pointer to receive the model handle.
enum KkrStatus kkr_model_fit_json(const struct KkrDataset *dataset,
                                  const char *config_json,
                                  struct KkrModel **out);

// Saves a model as JSON.
//
// # Safety
// `model` must be a live handle; `path` a valid NUL-terminated string.
enum KkrStatus kkr_model_save_json(const struct KkrModel *model, const char *path);

// Loads a model from JSON.
//
// # Safety
// `path` must be a valid NUL-terminated string; `out` a valid pointer to
// receive the model handle.
enum KkrStatus kkr_model_load_json(const char *path, struct KkrModel **out);

// State dimension expected by a model's forecasts.
//
// # Safety
// `model` must be a live handle; `state_dim` may be null.
enum KkrStatus kkr_model_state_dim(const struct KkrModel *model, size_t *state_dim);

// Rolls out a forecast of `steps + 1` values (including the initial one)
// into `out`. `max_imag`, when non-null, receives the largest imaginary
// magnitude discarded by the real-part extraction.
//
// # Safety
// `model` must be a live handle, `x0` must point to `state_dim` doubles
// and `out` to `steps + 1` writable doubles.
enum KkrStatus kkr_model_forecast(const struct KkrModel *model,
                                  const double *x0,
                                  size_t state_dim,
                                  size_t steps,
                                  double *out,
                                  double *max_imag);

// Frees a model handle (null is a no-op).
//
// # Safety
// `model` must be null or a handle obtained from this library that has
// not been freed yet.
void kkr_model_free(struct KkrModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KKR_H */
