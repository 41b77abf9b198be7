/* C interface to the snrge library. Every function returns a status code;
 * on failure snrge_last_error() describes the problem (thread-local).
 * Strings returned through char** must be released with snrge_string_free. */
#ifndef SNRGE_H
#define SNRGE_H

#include <stddef.h>

#if defined(_WIN32)
#define SNRGE_API __declspec(dllexport)
#else
#define SNRGE_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum snrge_status {
  SNRGE_OK = 0,
  SNRGE_E_USAGE = 1,
  SNRGE_E_DATA = 2,
  SNRGE_E_NUMERIC = 3,
  SNRGE_E_INTERNAL = 4
} snrge_status;

typedef enum snrge_method {
  SNRGE_METHOD_SPECTRA = 0,
  SNRGE_METHOD_PIXELS = 1,
  SNRGE_METHOD_SNN_NC = 2,
  SNRGE_METHOD_SNN_KNN = 3
} snrge_method;

typedef struct snrge_config snrge_config;
typedef struct snrge_clip snrge_clip;
typedef struct snrge_dataset snrge_dataset;
typedef struct snrge_embedder snrge_embedder;
typedef struct snrge_report snrge_report;

SNRGE_API const char* snrge_version(void);
SNRGE_API const char* snrge_last_error(void);
SNRGE_API void snrge_string_free(char* s);

/* Configuration: flat key/value pairs. */
SNRGE_API snrge_status snrge_config_new(snrge_config** out);
SNRGE_API snrge_status snrge_config_load(const char* path, snrge_config** out);
SNRGE_API snrge_status snrge_config_set(snrge_config* cfg, const char* key, const char* value);
/* "key=value" */
SNRGE_API snrge_status snrge_config_assign(snrge_config* cfg, const char* assignment);
/* SNRGE_E_USAGE if the key is absent. */
SNRGE_API snrge_status snrge_config_get(const snrge_config* cfg, const char* key, char** out);
SNRGE_API snrge_status snrge_config_to_string(const snrge_config* cfg, char** out);
SNRGE_API void snrge_config_free(snrge_config* cfg);

/* Mono audio clips. */
SNRGE_API snrge_status snrge_clip_new(const double* samples, size_t n, int sample_rate,
                                      snrge_clip** out);
SNRGE_API snrge_status snrge_clip_read(const char* path, snrge_clip** out);
SNRGE_API snrge_status snrge_clip_write(const snrge_clip* clip, const char* path);
SNRGE_API size_t snrge_clip_length(const snrge_clip* clip);
SNRGE_API int snrge_clip_sample_rate(const snrge_clip* clip);
SNRGE_API const double* snrge_clip_samples(const snrge_clip* clip);
SNRGE_API void snrge_clip_free(snrge_clip* clip);

/* Numeric helpers. */
SNRGE_API snrge_status snrge_rms(const double* x, size_t n, double* out);
SNRGE_API snrge_status snrge_mix_beta(double signal_rms, double noise_rms, double snr_db,
                                      double* out);
SNRGE_API snrge_status snrge_db_to_linear(double db, double* out);
SNRGE_API snrge_status snrge_linear_to_db(double ratio, double floor_db, double* out);
SNRGE_API snrge_status snrge_pearson(const double* x, const double* y, size_t n, double* out);

/* Datasets. */
SNRGE_API snrge_status snrge_dataset_generate(const snrge_config* cfg, const char* out_dir);
SNRGE_API snrge_status snrge_dataset_synthesize(const snrge_config* cfg, snrge_dataset** out);
SNRGE_API snrge_status snrge_dataset_open(const char* dir, snrge_dataset** out);
SNRGE_API size_t snrge_dataset_size(const snrge_dataset* ds);
SNRGE_API snrge_status snrge_dataset_digest(const snrge_dataset* ds, char** out);
SNRGE_API void snrge_dataset_free(snrge_dataset* ds);

/* Writes simulated candidate clips (one directory per level) for the
 * levels in `eval_levels` (default: the dataset grid). */
SNRGE_API snrge_status snrge_simulate(const snrge_dataset* ds, const snrge_config* cfg,
                                      const char* out_dir);

/* Embedders. `history` (nullable) receives a report holding the losses. */
SNRGE_API snrge_status snrge_embedder_train_all(const snrge_dataset* ds, const snrge_config* cfg,
                                                snrge_embedder** out, snrge_report** history);
/* Trains one network per grid level into `model_dir` (level_<dB>.snrm). */
SNRGE_API snrge_status snrge_embedder_train_per_snr(const snrge_dataset* ds,
                                                    const snrge_config* cfg,
                                                    const char* model_dir, snrge_report** history);
SNRGE_API snrge_status snrge_embedder_save(const snrge_embedder* e, const char* path);
SNRGE_API snrge_status snrge_embedder_load(const char* path, snrge_embedder** out);
SNRGE_API size_t snrge_embedder_dim(const snrge_embedder* e);
/* `out` must hold snrge_embedder_dim() values. `cfg` (nullable) sets STFT keys. */
SNRGE_API snrge_status snrge_embedder_embed(const snrge_embedder* e, const snrge_clip* clip,
                                            const snrge_config* cfg, double* out);
SNRGE_API void snrge_embedder_free(snrge_embedder* e);

/* Evaluation. Candidate samples come from `source_dir`, or the simulator
 * when it is NULL. `model` is an embedder checkpoint (snn-knn) or a
 * per-level model directory (snn-nc); NULL trains from scratch. */
SNRGE_API snrge_status snrge_evaluate(const snrge_dataset* ds, const snrge_config* cfg,
                                      snrge_method method, const char* source_dir,
                                      const char* model, snrge_report** out);
SNRGE_API snrge_status snrge_select_k(const snrge_dataset* ds, const snrge_embedder* e,
                                      const snrge_config* cfg, snrge_report** out);
SNRGE_API snrge_status snrge_project(const snrge_dataset* ds, const snrge_embedder* e,
                                     const snrge_config* cfg, const char* source_dir,
                                     snrge_report** out);

/* Reports. */
SNRGE_API snrge_status snrge_report_new(snrge_report** out);
SNRGE_API snrge_status snrge_report_load(const char* path, snrge_report** out);
SNRGE_API snrge_status snrge_report_merge(snrge_report* into, const snrge_report* fragment);
SNRGE_API snrge_status snrge_report_to_json(const snrge_report* r, int include_timestamp,
                                            char** out);
SNRGE_API snrge_status snrge_report_write(const snrge_report* r, const char* out_dir);
SNRGE_API void snrge_report_free(snrge_report* r);

#ifdef __cplusplus
}
#endif

#endif
