/* highratemos.h - C API for the HighRateMOS speech quality predictor.
 *
 * All functions return HRM_OK (0) on success or a negative error code.
 * On failure, hrm_last_error() returns a thread-local message describing
 * what went wrong. Objects are opaque handles released with their
 * matching *_free function.
 */
#ifndef HIGHRATEMOS_H
#define HIGHRATEMOS_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

enum hrm_status {
  HRM_OK = 0,
  HRM_ERR_IO = -1,
  HRM_ERR_SCHEMA = -2,
  HRM_ERR_VALIDATION = -3,
  HRM_ERR_CONFIG = -4,
  HRM_ERR_UNSUPPORTED_FORMAT = -5,
  HRM_ERR_UNAVAILABLE = -6,
  HRM_ERR_SHAPE = -7,
  HRM_ERR_DIVERGENCE = -8,
  HRM_ERR_INTERNAL = -9
};

/* Thread-local message for the most recent failure in this thread. */
const char* hrm_last_error(void);

/* ---- run configuration ------------------------------------------------- */

typedef struct hrm_config hrm_config;

int hrm_config_new(hrm_config** out);                      /* defaults */
int hrm_config_load(const char* path, hrm_config** out);   /* key=value file */
int hrm_config_set(hrm_config* cfg, const char* key, const char* value);
/* Fully resolved key=value document; caller buffer, returns needed size. */
int hrm_config_text(const hrm_config* cfg, char* buf, size_t buflen,
                    size_t* needed);
int hrm_config_write(const hrm_config* cfg, const char* path);
/* Flip one ablation component off (ssl, sr_emb, mel, multi_cnn, mfcc,
 * cross_attn, blstm). */
int hrm_config_ablate(hrm_config* cfg, const char* component);
void hrm_config_free(hrm_config* cfg);

/* ---- pipeline commands -------------------------------------------------- */

/* Build the feature cache for every utterance in the manifest. */
int hrm_extract(const hrm_config* cfg, const char* manifest_path,
                const char* cache_dir);

/* Train on a manifest: records with fold 0 validate, the rest train. When
 * the manifest carries no fold column, a grouped cv.k split assigns one.
 * Writes best.ckpt, history.csv and resolved.cfg into out_dir. */
int hrm_train(const hrm_config* cfg, const char* manifest_path,
              const char* out_dir, const char* cache_dir);

/* K-fold cross validation. Assigns folds when the manifest carries none.
 * Writes fold<i>.ckpt, fold<i>_history.csv, pooled.tsv, cv_summary.csv and
 * resolved.cfg into out_dir. */
int hrm_cv(const hrm_config* cfg, const char* manifest_path,
           const char* out_dir, const char* cache_dir);

/* Score every manifest utterance with a checkpoint. Refuses to run when
 * the checkpoint's feature hash does not match the config. */
int hrm_predict(const hrm_config* cfg, const char* checkpoint_path,
                const char* manifest_path, const char* out_file,
                const char* cache_dir);

/* Metric report (utterance + system level) for a prediction file against
 * manifest labels, as a flat key=value block. */
int hrm_evaluate(const char* pred_file, const char* manifest_path, char* buf,
                 size_t buflen, size_t* needed);

/* Prediction-combination settings. fold files/srccs may be NULL for
 * settings that do not need them; std files likewise. */
typedef struct hrm_ensemble_member {
  const char* const* fold_files; /* five-fold prediction files */
  const double* fold_srcc;       /* matching dev SRCCs (best-of-fold) */
  int n_folds;
  const char* std_file;          /* standard-training prediction file */
} hrm_ensemble_member;

int hrm_ensemble(const char* spec_name, const hrm_ensemble_member* m1,
                 const hrm_ensemble_member* m2, const hrm_ensemble_member* m3,
                 const char* out_file);

/* ---- metric primitives -------------------------------------------------- */

/* value_out receives the correlation; degenerate_out (may be NULL) is set
 * to 1 when the zero-variance fallback produced a flagged 0. */
int hrm_pearson(const double* x, const double* y, size_t n, double* value_out,
                int* degenerate_out);
int hrm_spearman(const double* x, const double* y, size_t n, double* value_out,
                 int* degenerate_out);
int hrm_kendall_tau(const double* x, const double* y, size_t n,
                    double* value_out, int* degenerate_out);

/* ---- external frame-encoder plugin contract ----------------------------- */
/* A shared object named by encoder.library must export these two symbols.
 * encode writes T*output_dim doubles (row-major frames) to out, where
 * T = 1 + (n_samples - receptive_window_samples) / frame_hop_samples. */

typedef struct hrm_ext_encoder_info {
  int output_dim;
  int frame_hop_samples;
  int receptive_window_samples;
} hrm_ext_encoder_info;

typedef int (*hrm_ext_encoder_get_info_fn)(hrm_ext_encoder_info* info);
typedef int (*hrm_ext_encoder_encode_fn)(const double* samples, long n_samples,
                                         int sample_rate, double* out,
                                         long* t_out);

#ifdef __cplusplus
}
#endif

#endif /* HIGHRATEMOS_H */
