#ifndef JOINT_ASR_H
#define JOINT_ASR_H

#pragma once

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every call.
 */
typedef enum JasStatus {
  JAS_STATUS_OK = 0,
  JAS_STATUS_NULL_POINTER = 1,
  JAS_STATUS_INVALID_UTF8 = 2,
  JAS_STATUS_DOMAIN = 3,
  JAS_STATUS_FORMAT = 4,
  JAS_STATUS_UNSUPPORTED = 5,
  JAS_STATUS_INFEASIBLE = 6,
  JAS_STATUS_CONFIG = 7,
  JAS_STATUS_NORMALIZATION = 8,
  JAS_STATUS_LOAD = 9,
  JAS_STATUS_DIVERGENCE = 10,
  JAS_STATUS_IO = 11,
  JAS_STATUS_PANIC = 12,
} JasStatus;

/**
 * A loaded or freshly initialised model with its speaker labels.
 */
typedef struct JasModel JasModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the calling thread's last error message into `buf` (NUL-terminated,
 * truncated to `len - 1` bytes). Returns the full message length, or 0
 * when no error has been recorded.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t jas_last_error(char *buf, size_t len);

/**
 * Load a checkpoint file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum JasStatus jas_model_load(const char *path, struct JasModel **out);

/**
 * Initialise an untrained model from a named preset (`v1`, `v2`, `v3`,
 * `tiny`). Speakers are labelled `spk000`, `spk001`, ...
 *
 * # Safety
 * `preset` must be a NUL-terminated string; `out` must be writable.
 */
enum JasStatus jas_model_init(const char *preset,
                              size_t n_speakers,
                              bool speech_only,
                              uint64_t seed,
                              struct JasModel **out);

/**
 * # Safety
 * `model` must be null or a handle from this library not yet freed.
 */
void jas_model_free(struct JasModel *model);

/**
 * Number of trainable parameters.
 *
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum JasStatus jas_model_n_parameters(const struct JasModel *model, size_t *out);

/**
 * Transcribe mono float samples and, for joint models, identify the
 * speaker. Audio at any rate is resampled to 16 kHz. `out_speaker` may be
 * null; it receives null for speech-only models.
 *
 * # Safety
 * `samples` must point to `len` floats; `model` must be a live handle;
 * `out_text` must be writable and `out_speaker` null or writable.
 */
enum JasStatus jas_model_recognize(const struct JasModel *model,
                                   const float *samples,
                                   size_t len,
                                   uint32_t sample_rate_hz,
                                   char **out_text,
                                   char **out_speaker);

/**
 * # Safety
 * `s` must be null or a string returned by this library not yet freed.
 */
void jas_string_free(char *s);

/**
 * Character error rate of `hypothesis` against `reference` after text
 * normalisation.
 *
 * # Safety
 * Both strings must be NUL-terminated; `out` must be writable.
 */
enum JasStatus jas_cer(const char *reference, const char *hypothesis, double *out);

/**
 * Mix `noise` into `signal` (same rate) at `snr_db`; pass `INFINITY` for the
 * untouched signal. Writes `signal_len` samples to `out`.
 *
 * # Safety
 * `signal` and `out` must hold `signal_len` floats, `noise` `noise_len`.
 */
enum JasStatus jas_mix_at_snr(const float *signal,
                              size_t signal_len,
                              const float *noise,
                              size_t noise_len,
                              uint32_t sample_rate_hz,
                              double snr_db,
                              float *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* JOINT_ASR_H */
