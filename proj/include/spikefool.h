/* spikefool.h - C API for the spikefool shared library.
 *
 * Adversarial attacks on discrete-time spiking convolutional networks over
 * binary event rasters: the SNN engine, SpikeFool / PGD-style attacks,
 * adversarial-patch training, TRADES adversarial training, and the campaign
 * harness behind the benchmark CLI.
 *
 * Conventions:
 *   - Every function returns an sf_status code; SF_OK (0) means success.
 *   - On failure, sf_last_error() returns a thread-local message.
 *   - Objects are opaque handles freed with their sf_*_free function.
 *   - Rasters are [T,P,H,W] tensors of small non-negative integer counts
 *     (binary in the usual max-one-event-per-voxel configuration).
 *   - High-level sf_run_* entry points take a JSON config string and write
 *     their outputs (reports, models, rasters) under an output directory;
 *     these are what the CLI calls. See the README for the config schemas.
 */

#ifndef SPIKEFOOL_H
#define SPIKEFOOL_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define SF_API __declspec(dllexport)
#else
#define SF_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sf_status {
  SF_OK = 0,
  SF_ERR_INTERNAL = 1,
  SF_ERR_IO = 2,
  SF_ERR_PARSE = 3,
  SF_ERR_VALIDATION = 4,
  SF_ERR_CONFIG = 5,
  SF_ERR_NUMERIC = 6,
  SF_ERR_CALIBRATION = 7,
  SF_ERR_DEGENERATE_GRADIENT = 8,
} sf_status;

typedef struct sf_events sf_events;
typedef struct sf_raster sf_raster;
typedef struct sf_model sf_model;
typedef struct sf_patch sf_patch;

SF_API const char* sf_version(void);

/* Thread-local message for the most recent failure on this thread. */
SF_API const char* sf_last_error(void);

SF_API void sf_string_free(char* s);

/* ------------------------------------------------------------------ events */

/* format: "csv" (header t,x,y,p) or "raw" (EVT0 container). width/height of 0
 * infer the sensor size from the data (raw files carry their own). */
SF_API sf_status sf_events_load(const char* path, const char* format,
                                uint32_t width, uint32_t height,
                                sf_events** out);
SF_API sf_status sf_events_save(const sf_events* events, const char* path,
                                const char* format);
SF_API size_t sf_events_count(const sf_events* events);
SF_API void sf_events_free(sf_events* events);

/* ----------------------------------------------------------------- rasters */

SF_API sf_status sf_rasterize(const sf_events* events, uint64_t t_start_us,
                              uint64_t duration_us, uint32_t n_bins,
                              uint32_t max_per_cell, sf_raster** out);
SF_API sf_status sf_raster_load(const char* path, sf_raster** out);
SF_API sf_status sf_raster_save(const sf_raster* raster, const char* path);
/* dims filled as [T, P, H, W]. */
SF_API sf_status sf_raster_shape(const sf_raster* raster, uint32_t dims[4]);
/* Copies T*P*H*W voxel counts into buf (row-major). */
SF_API sf_status sf_raster_data(const sf_raster* raster, uint8_t* buf,
                                size_t buf_len);
SF_API void sf_raster_free(sf_raster* raster);

/* Converts an attacked raster back into an event list: added voxels become
 * new events at bin centers; removals are dropped unless honor_removals. */
SF_API sf_status sf_raster_to_new_events(const sf_events* original,
                                         const sf_raster* original_raster,
                                         const sf_raster* adv_raster,
                                         uint64_t t_start_us,
                                         uint64_t duration_us,
                                         int honor_removals, sf_events** out);

/* ------------------------------------------------------------------ models */

SF_API sf_status sf_model_load(const char* path, sf_model** out);
SF_API sf_status sf_model_save(const sf_model* model, const char* path);
SF_API int sf_model_num_classes(const sf_model* model);
/* Per-class spike counts (spiking) or logits (analog). counts must hold
 * sf_model_num_classes() doubles; label receives the argmax (lowest index
 * wins ties). counts/label may be NULL. */
SF_API sf_status sf_model_forward(sf_model* model, const sf_raster* x,
                                  double* counts, int* label);
/* Symmetric per-layer weight quantization (2..8 bits). */
SF_API sf_status sf_model_quantize(const sf_model* model, int bits,
                                   sf_model** out);
SF_API void sf_model_free(sf_model* model);

/* ----------------------------------------------------------------- attacks */

typedef struct sf_attack_result {
  int success;
  int original_label;
  int adversarial_label;
  int64_t queries;
  int64_t l0;
  double elapsed_s;
} sf_attack_result;

/* attack_config_json selects and parameterizes the attack, e.g.
 *   {"kind":"spikefool","eta":0.1,"lambda":2.0}
 *   {"kind":"cd_pgd","n_steps":50,"step_size":0.1}
 *   {"kind":"prob_pgd","n_steps":50,"n_mc":10,"temperature":0.01}
 * x_adv (optional) receives the adversarial raster. */
SF_API sf_status sf_attack_run(sf_model* model, const sf_raster* x,
                               uint32_t true_label,
                               const char* attack_config_json, uint64_t seed,
                               sf_attack_result* result, sf_raster** x_adv);

/* ----------------------------------------------------------------- patches */

SF_API sf_status sf_patch_load(const char* path, sf_patch** out);
SF_API sf_status sf_patch_save(const sf_patch* patch, const char* path);
SF_API sf_status sf_patch_apply(const sf_raster* x, const sf_patch* patch,
                                int pos_y, int pos_x, sf_raster** out);
SF_API void sf_patch_free(sf_patch* patch);

/* ------------------------------------------------- experiment entry points */

/* The six benchmark commands. config_json schemas are documented in the
 * README; every command echoes its resolved config into out_dir and fails
 * (non-SF_OK) unless all outputs were written and self-consistency checks
 * passed. summary (optional) receives a human-readable result line to free
 * with sf_string_free. */
SF_API sf_status sf_run_synth(const char* config_json, const char* out_dir,
                              char** summary);
SF_API sf_status sf_run_train(const char* config_json, const char* out_dir,
                              char** summary);
SF_API sf_status sf_run_attack(const char* config_json, const char* out_dir,
                               char** summary);
SF_API sf_status sf_run_patch(const char* config_json, const char* out_dir,
                              char** summary);
SF_API sf_status sf_run_defend(const char* config_json, const char* out_dir,
                               char** summary);
/* Merges attack-campaign report JSONs into a summary table. out_dir may be
 * NULL or empty to skip writing summary.json/summary.csv. */
SF_API sf_status sf_run_report(const char* const* report_paths, size_t n_paths,
                               const char* out_dir, char** summary);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* SPIKEFOOL_H */
