#ifndef CRYOFORGE_H
#define CRYOFORGE_H

/*
 * cryoforge public C API.
 *
 * The engine is a C++ library behind this flat interface: opaque handles,
 * integer status codes, and UTF-8 paths/strings. All functions return a
 * cf_status; out-parameters are written only on CF_OK. Handles are freed with
 * their matching cf_*_free function; freeing NULL is a no-op. The most recent
 * error message for the calling thread is available via cf_last_error().
 */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum cf_status {
  CF_OK = 0,
  CF_ERR_USAGE = 1,   /* bad arguments, unknown keys, invalid config */
  CF_ERR_DATA = 2,    /* malformed or inconsistent input data */
  CF_ERR_NUMERIC = 3, /* numerical failure (non-finite values, aborts) */
} cf_status;

typedef struct cf_config cf_config;   /* flat key=value configuration */
typedef struct cf_dataset cf_dataset; /* particle stack + CTF table + metadata */
typedef struct cf_volume cf_volume;   /* real-space density volume */
typedef struct cf_report cf_report;   /* held-out evaluation report */

const char* cf_version(void);

/* Thread-local message describing the last failure in this thread. */
const char* cf_last_error(void);

/* ---- configuration ------------------------------------------------- */

cf_status cf_config_new(cf_config** out);
cf_status cf_config_load(const char* path, cf_config** out);
cf_status cf_config_set(cf_config* cfg, const char* key, const char* value);
cf_status cf_config_get(const cf_config* cfg, const char* key, char* buf, size_t buflen);
/* Writes the fully resolved config as "key = value" lines. */
cf_status cf_config_write(const cf_config* cfg, const char* path);
void cf_config_free(cf_config* cfg);

/* ---- datasets ------------------------------------------------------ */

/* Opens a dataset via its manifest file. */
cf_status cf_dataset_open(const char* manifest_path, cf_dataset** out);
cf_status cf_dataset_image_count(const cf_dataset* ds, int64_t* out);
cf_status cf_dataset_image_size(const cf_dataset* ds, int32_t* out);
cf_status cf_dataset_pixel_size(const cf_dataset* ds, double* out);
cf_status cf_dataset_noise_sigma(const cf_dataset* ds, double* out);
void cf_dataset_free(cf_dataset* ds);

/* ---- volumes ------------------------------------------------------- */

cf_status cf_volume_read_mrc(const char* path, cf_volume** out);
cf_status cf_volume_write_mrc(const cf_volume* vol, const char* path);
cf_status cf_volume_size(const cf_volume* vol, int32_t* out);
cf_status cf_volume_voxel_size(const cf_volume* vol, double* out);
cf_status cf_volume_stats(const cf_volume* vol, double* min, double* max, double* mean);
void cf_volume_free(cf_volume* vol);

/* ---- pipeline ------------------------------------------------------ */

/*
 * Simulates a synthetic dataset into out_dir (MRC stack, CTF table, truth
 * sidecar, manifest, resolved config). Configuration keys are documented in
 * the README; unknown keys are usage errors.
 */
cf_status cf_simulate(const cf_config* cfg, const char* out_dir);

/*
 * Runs the full reconstruction loop on a dataset, writing the volume,
 * checkpoints, diagnostics CSV, and resolved config into out_dir.
 * Returns the final volume if out_volume is non-NULL.
 */
cf_status cf_reconstruct(const cf_dataset* ds, const cf_config* cfg, const char* out_dir,
                         cf_volume** out_volume);

/*
 * Evaluates a volume against (a slice of) a dataset; writes report files into
 * out_dir if it is non-NULL.
 */
cf_status cf_evaluate(const cf_volume* vol, const cf_dataset* ds, const cf_config* cfg,
                      const char* out_dir, cf_report** out);
cf_status cf_report_rremse(const cf_report* rep, double* out);
cf_status cf_report_image_count(const cf_report* rep, int64_t* out);
cf_status cf_report_flagged_count(const cf_report* rep, int64_t* out);
void cf_report_free(cf_report* rep);

#ifdef __cplusplus
}
#endif

#endif /* CRYOFORGE_H */
