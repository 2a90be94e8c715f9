/* vorofield - adaptive nested Voronoi radiance fields.
 *
 * C API over the core library: opaque handles, status-code returns, and a
 * per-thread error message. All functions returning vf_status leave their
 * outputs untouched on failure.
 */
#ifndef VOROFIELD_H
#define VOROFIELD_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum vf_status {
  VF_OK = 0,
  VF_ERR_USAGE = 1,   /* bad arguments or violated preconditions */
  VF_ERR_DATA = 2,    /* missing or malformed input files */
  VF_ERR_NUMERIC = 3  /* non-finite values or other runtime failure */
} vf_status;

typedef struct vf_config vf_config;
typedef struct vf_dataset vf_dataset;
typedef struct vf_model vf_model;

const char* vf_version(void);

/* Message for the most recent failing call on the calling thread. */
const char* vf_last_error(void);

/* ------------------------------------------------------------------ config */

vf_status vf_config_default(vf_config** out);
vf_status vf_config_load(const char* path, vf_config** out);

/* Dotted-path override, e.g. vf_config_set(cfg, "train.cells", "16"). The
 * value is parsed as JSON when possible and taken as a string otherwise. */
vf_status vf_config_set(vf_config* cfg, const char* key, const char* value);

/* Serialized config JSON; free the returned string with vf_string_free. */
vf_status vf_config_dump(const vf_config* cfg, char** out_json);

void vf_config_free(vf_config* cfg);
void vf_string_free(char* s);

/* ----------------------------------------------------------------- dataset */

/* Builds the dataset selected by the config's scene section: an analytic
 * fixture rendered by the oracle, or a transforms-JSON dataset directory. */
vf_status vf_dataset_open(const vf_config* cfg, vf_dataset** out);

/* Writes transforms_{train,test}.json plus PNG images. */
vf_status vf_dataset_export(const vf_dataset* ds, const char* dir);

vf_status vf_dataset_counts(const vf_dataset* ds, int* train_views, int* test_views);

void vf_dataset_free(vf_dataset* ds);

/* ---------------------------------------------------------------- training */

/* Full training run into out_dir: checkpoints, metrics.csv, reservoir PLY
 * exports and manifest.json. */
vf_status vf_train(const vf_config* cfg, const vf_dataset* ds, const char* out_dir);

/* Trains both arms on the same dataset with a matched wall-clock budget in
 * seconds; writes per-arm run directories plus long-format compare.csv. */
vf_status vf_compare(const vf_config* arm_a, const vf_config* arm_b, const vf_dataset* ds,
                     double budget_s, const char* out_dir);

/* ------------------------------------------------------------- checkpoints */

vf_status vf_model_open(const char* checkpoint_path, vf_model** out);
vf_status vf_model_save(const vf_model* m, const char* path);
vf_status vf_model_leaf_count(const vf_model* m, int* out);
void vf_model_free(vf_model* m);

/* Renders a dataset split ("train" or "test"): one PNG per view unless
 * metrics_only is nonzero, plus metrics.csv with per-view PSNR/SSIM. cell_vis
 * colours each pixel by the Voronoi cell of its heaviest sample. */
vf_status vf_render_split(const vf_model* m, const vf_dataset* ds, const char* split,
                          int samples_per_ray, int threads, int cell_vis, int metrics_only,
                          const char* out_dir);

/* ----------------------------------------------------------------- exports */

/* Cell centres of a checkpoint as an ascii PLY point cloud. */
vf_status vf_export_centres(const vf_model* m, const char* out_path);

/* Re-emits a weighted-sample reservoir PLY (parse + rewrite). */
vf_status vf_export_samples(const char* reservoir_ply_in, const char* out_path);

#ifdef __cplusplus
}
#endif

#endif /* VOROFIELD_H */
