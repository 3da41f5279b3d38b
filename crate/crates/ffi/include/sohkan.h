/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef SOHKAN_H
#define SOHKAN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SohkanStatus {
  SOHKAN_STATUS_OK = 0,
  // A required pointer argument was null.
  SOHKAN_STATUS_NULL_ARGUMENT = 1,
  // A string argument was not valid UTF-8.
  SOHKAN_STATUS_INVALID_UTF8 = 2,
  SOHKAN_STATUS_IO = 3,
  // Malformed CSV or JSON input.
  SOHKAN_STATUS_PARSE = 4,
  // Inputs violate a precondition (bad config, too few samples, ...).
  SOHKAN_STATUS_INVALID_INPUT = 5,
  // Divergence, failed fits, vanishing denominators.
  SOHKAN_STATUS_NUMERICAL = 6,
  // The output buffer is too small; the required length was written.
  SOHKAN_STATUS_BUFFER_TOO_SMALL = 7,
  // Internal panic; the handle arguments should be considered unusable.
  SOHKAN_STATUS_PANIC = 8,
} SohkanStatus;

// Per-cycle telemetry.
typedef struct SohkanDataset SohkanDataset;

// Trained two-input KAN.
typedef struct SohkanModel SohkanModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version, a static NUL-terminated string.
const char *sohkan_version(void);

// Message of the last failed call on this thread, or null. The pointer
// stays valid until the next failing call on this thread.
const char *sohkan_last_error_message(void);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void sohkan_string_free(char *s);

// Reads a telemetry CSV (`cycle,t_s,temp_c,current_a,voltage_v,ambient_c`).
//
// # Safety
// `path` must be a NUL-terminated string; `out` a valid pointer.
enum SohkanStatus sohkan_dataset_load_csv(const char *path, struct SohkanDataset **out);

// Simulates a synthetic life. `config_json` is a run configuration in the
// CLI's JSON format, or null for the defaults.
//
// # Safety
// `config_json` must be null or NUL-terminated; `out` a valid pointer.
enum SohkanStatus sohkan_dataset_simulate(const char *config_json, struct SohkanDataset **out);

// Number of cycles in the dataset; 0 for null.
//
// # Safety
// `dataset` must be null or a live handle.
size_t sohkan_dataset_n_cycles(const struct SohkanDataset *dataset);

// # Safety
// `dataset` must be null or a live handle; it is invalid afterwards.
void sohkan_dataset_free(struct SohkanDataset *dataset);

// Trains a model on `dataset`. `config_json` may be null for defaults.
// `test_rmse_c`, when non-null, receives the test-split RMSE in °C.
//
// # Safety
// Pointers must be valid or null where allowed.
enum SohkanStatus sohkan_train(const struct SohkanDataset *dataset,
                               const char *config_json,
                               struct SohkanModel **out,
                               double *test_rmse_c);

// # Safety
// `path` must be NUL-terminated; `out` a valid pointer.
enum SohkanStatus sohkan_model_load(const char *path, struct SohkanModel **out);

// # Safety
// `model` must be a live handle; `path` NUL-terminated.
enum SohkanStatus sohkan_model_save(const struct SohkanModel *model, const char *path);

// # Safety
// `model` must be null or a live handle; it is invalid afterwards.
void sohkan_model_free(struct SohkanModel *model);

// Normalized prediction `A1(t_bar) + A2(k_bar)` of T̄ one horizon ahead.
//
// # Safety
// `model` must be a live handle; `out` a valid pointer.
enum SohkanStatus sohkan_model_forward(const struct SohkanModel *model,
                                       double t_bar,
                                       double k_bar,
                                       double *out);

// Temperature one horizon ahead, in °C, from the current temperature and
// cycle index.
//
// # Safety
// `model` must be a live handle; `out` a valid pointer.
enum SohkanStatus sohkan_model_predict_celsius(const struct SohkanModel *model,
                                               double temp_c,
                                               size_t cycle,
                                               double *out);

// Index E of the last training cycle; SoH curves have E + 1 points.
//
// # Safety
// `model` must be null or a live handle.
size_t sohkan_model_last_cycle(const struct SohkanModel *model);

// SoH (%) at cycles 0..=E from the learned cycle activation.
//
// With the training `dataset` the offset is anchored; with null it is
// used raw. Writes E + 1 values into `buf` and the count into `written`.
// If `len` is smaller, nothing is copied, `written` receives the required
// length and `SOHKAN_STATUS_BUFFER_TOO_SMALL` is returned.
//
// # Safety
// `buf` must hold `len` doubles (or be null with `len` 0); other pointers
// valid or null where allowed.
enum SohkanStatus sohkan_soh(const struct SohkanModel *model,
                             const struct SohkanDataset *dataset,
                             double *buf,
                             size_t len,
                             size_t *written);

// Best-ranked closed form of the cycle activation as text, e.g.
// `A2(kbar) = 0.42 + 0.18*kbar, kbar in [0, 1]`. `dataset` enables the
// anchored offset as in [`sohkan_soh`]. `r2`, when non-null, receives the
// fit's R². Free the string with [`sohkan_string_free`].
//
// # Safety
// Pointers must be valid or null where allowed.
enum SohkanStatus sohkan_best_formula(const struct SohkanModel *model,
                                      const struct SohkanDataset *dataset,
                                      char **out,
                                      double *r2);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SOHKAN_H */
