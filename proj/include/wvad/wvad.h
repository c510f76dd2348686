/* C interface to the weakly supervised video anomaly detection library.
 *
 * Every function returns a wvad_status. On failure the message is available
 * from wvad_last_error() until the next call on the same thread. Status values
 * double as process exit codes for the command-line tool.
 */
#ifndef WVAD_WVAD_H
#define WVAD_WVAD_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(WVAD_BUILDING)
#    define WVAD_API __declspec(dllexport)
#  else
#    define WVAD_API __declspec(dllimport)
#  endif
#else
#  define WVAD_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum wvad_status {
  WVAD_OK = 0,
  WVAD_ERR_INTERNAL = 1,
  WVAD_ERR_CONFIG = 2,  /* configuration, argument or dimension error */
  WVAD_ERR_IO = 3,      /* I/O or file format error */
  WVAD_ERR_NUMERIC = 4  /* non-finite values, undefined metric, training failure */
} wvad_status;

typedef struct wvad_config wvad_config;
typedef struct wvad_model wvad_model;

/* Receives one line of progress output (no trailing newline). */
typedef void (*wvad_line_fn)(const char* line, void* user);

WVAD_API const char* wvad_version(void);
WVAD_API const char* wvad_last_error(void);

/* Configuration. Unknown keys are rejected. */
WVAD_API wvad_status wvad_config_default(wvad_config** out);
WVAD_API wvad_status wvad_config_from_file(const char* path, wvad_config** out);
WVAD_API wvad_status wvad_config_from_string(const char* json, wvad_config** out);
/* Overrides the data, training and ablation seeds. */
WVAD_API wvad_status wvad_config_set_seed(wvad_config* cfg, uint64_t seed);
/* Resolved configuration as JSON; the string lives until the next call on cfg. */
WVAD_API wvad_status wvad_config_to_json(wvad_config* cfg, const char** json);
WVAD_API void wvad_config_free(wvad_config* cfg);

/* Workflows. Each writes run.json into its output directory. */
WVAD_API wvad_status wvad_synth(const wvad_config* cfg, const char* out_dir);
/* resume_checkpoint may be NULL. */
WVAD_API wvad_status wvad_train(const wvad_config* cfg, const char* data_dir, const char* out_dir,
                                const char* resume_checkpoint, wvad_line_fn on_step, void* user);
WVAD_API wvad_status wvad_eval(const char* checkpoint, const char* data_dir, const char* out_dir, double* auc,
                               double* ap);
WVAD_API wvad_status wvad_mine(const wvad_config* cfg, const char* scores_csv, const char* out_dir,
                               size_t* mined_count);
/* split is "train", "test" or "all". */
WVAD_API wvad_status wvad_export_scores(const char* checkpoint, const char* data_dir, const char* out_dir,
                                        const char* split);
WVAD_API wvad_status wvad_ablate(const wvad_config* cfg, const char* data_dir, const char* out_dir,
                                 wvad_line_fn on_row, void* user);
/* Runs the finite-difference suite, one line per check. out_dir may be NULL.
 * A failing check is reported through *passed, not the status. */
WVAD_API wvad_status wvad_gradcheck(const wvad_config* cfg, int inject_faulty_op, const char* out_dir,
                                    wvad_line_fn on_entry, void* user, int* passed);

/* Trained models. */
WVAD_API wvad_status wvad_model_load(const char* checkpoint, wvad_model** out);
WVAD_API wvad_status wvad_model_dims(const wvad_model* m, size_t* snippets, size_t* feature_dim);
/* features: snippets x feature_dim row-major; snippet_scores receives `snippets` values. */
WVAD_API wvad_status wvad_model_score(const wvad_model* m, const float* features, size_t snippets,
                                      size_t feature_dim, double* snippet_scores, double* video_score);
WVAD_API void wvad_model_free(wvad_model* m);

#ifdef __cplusplus
}
#endif

#endif /* WVAD_WVAD_H */
