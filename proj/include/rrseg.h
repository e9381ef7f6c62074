/*
 * rrseg — referring image segmentation, C API.
 *
 * All functions return RRSEG_OK on success, RRSEG_ERR_VALIDATION for bad
 * inputs (configs, manifests, shapes) and RRSEG_ERR_RUNTIME for failures
 * mid-run. rrseg_last_error() describes the most recent failure on the
 * calling thread.
 */
#ifndef RRSEG_H
#define RRSEG_H

#include <stdint.h>

#if defined(RRSEG_BUILD_SHARED)
#define RRSEG_API __attribute__((visibility("default")))
#else
#define RRSEG_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

#define RRSEG_OK 0
#define RRSEG_ERR_VALIDATION 2
#define RRSEG_ERR_RUNTIME 3

RRSEG_API const char* rrseg_version(void);

/* Thread-local message for the last failed call; never NULL. */
RRSEG_API const char* rrseg_last_error(void);

/* ---- model handle ---- */

typedef struct rrseg_model rrseg_model;

RRSEG_API int rrseg_model_open(const char* checkpoint_path, rrseg_model** out_model);
RRSEG_API void rrseg_model_close(rrseg_model* model);
RRSEG_API int rrseg_model_input_size(const rrseg_model* model, int64_t* h2, int64_t* w2);

/*
 * image_rgb: H2*W2*3 floats in [0,1], row-major interleaved.
 * mask_out:  H2*W2 bytes, written as 0/1.
 * dense_out: optional (H2/4)*(W2/4) floats, written as activation
 *            probabilities; pass NULL to skip.
 */
RRSEG_API int rrseg_model_predict(rrseg_model* model, const float* image_rgb,
                                  const char* text, uint8_t* mask_out, float* dense_out);

/* ---- file-level operations (the CLI is a thin shell over these) ---- */

/* Trains per config on data_root/{train,val}.tsv; writes train_log.jsonl,
 * best.ckpt, last.ckpt under out_dir. */
RRSEG_API int rrseg_train(const char* config_path, const char* data_root,
                          const char* out_dir);

/* Evaluates on data_root/<split>.tsv, writes the JSON report (may be NULL). */
RRSEG_API int rrseg_eval(const char* checkpoint_path, const char* data_root,
                         const char* split, const char* report_path);

/* Predicts one image; writes a 1-bit PNG mask and, when dense_pgm_path is
 * non-NULL, the dense-prompt heatmap as 8-bit PGM. */
RRSEG_API int rrseg_predict_file(const char* checkpoint_path, const char* image_path,
                                 const char* text, const char* mask_out_path,
                                 const char* dense_pgm_path);

/* Per-sample error attribution (ok / localization_error / segmentation_error).
 * Count pointers may be NULL; report_path may be NULL. */
RRSEG_API int rrseg_diagnose(const char* checkpoint_path, const char* data_root,
                             const char* split, const char* report_path, int64_t* ok_count,
                             int64_t* localization_errors, int64_t* segmentation_errors);

/* Writes n synthetic triplets in the images/ masks/ <split>.tsv layout.
 * spec_path may be NULL for the default generator settings. */
RRSEG_API int rrseg_synth_data(const char* spec_path, int64_t n, const char* out_dir,
                               const char* split);

#ifdef __cplusplus
}
#endif

#endif /* RRSEG_H */
