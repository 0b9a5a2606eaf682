/* C interface to the hyperbolic learning toolkit.
 *
 * Every handle is opaque and owned by the caller, who releases it with the
 * matching _destroy function. Functions that can fail return a hyptk_status;
 * on failure hyptk_last_error() describes the problem for the calling thread.
 * Status values double as the command-line exit codes. */
#ifndef HYPTK_H
#define HYPTK_H

#include <stddef.h>
#include <stdint.h>

#if defined(HYPTK_BUILDING_LIBRARY)
#define HYPTK_API __attribute__((visibility("default")))
#else
#define HYPTK_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum hyptk_status {
  HYPTK_OK = 0,
  HYPTK_ERROR = 1, /* contract, shape or manifold violations */
  HYPTK_CONFIG_ERROR = 2,
  HYPTK_DATA_ERROR = 3,
  HYPTK_NUMERIC_ERROR = 4
} hyptk_status;

typedef struct hyptk_config hyptk_config;
typedef struct hyptk_run hyptk_run;
typedef struct hyptk_manifold hyptk_manifold;

HYPTK_API const char* hyptk_version(void);
HYPTK_API const char* hyptk_last_error(void);

/* Run configuration. Keys are the command-line flag names without dashes,
 * e.g. "lr", "manifold", "export-format"; booleans take "true"/"false". */
HYPTK_API hyptk_status hyptk_config_create(hyptk_config** out);
HYPTK_API void hyptk_config_destroy(hyptk_config* config);
HYPTK_API hyptk_status hyptk_config_set(hyptk_config* config, const char* key, const char* value);
HYPTK_API hyptk_status hyptk_config_load_file(hyptk_config* config, const char* path);
/* Copies the value into buf (NUL-terminated, truncated to cap) and stores the
 * full length in *length when length is not NULL. */
HYPTK_API hyptk_status hyptk_config_get(const hyptk_config* config, const char* key, char* buf,
                                        size_t cap, size_t* length);

/* Training runs ("embed-tree" or "train-image", chosen by the "command" key). */
typedef void (*hyptk_epoch_callback)(int64_t epoch, int64_t step, double loss, double accuracy,
                                     void* user);

HYPTK_API hyptk_status hyptk_run_create(const hyptk_config* config, hyptk_run** out);
/* Only keys explicitly set on overrides apply; overrides may be NULL. */
HYPTK_API hyptk_status hyptk_run_resume(const char* checkpoint, const hyptk_config* overrides,
                                        hyptk_run** out);
HYPTK_API void hyptk_run_destroy(hyptk_run* run);
/* Trains to the configured epoch count, then writes the configured metrics,
 * checkpoint and disk export. accuracy is NaN for embedding runs. */
HYPTK_API hyptk_status hyptk_run_train(hyptk_run* run, hyptk_epoch_callback callback, void* user);
HYPTK_API hyptk_status hyptk_run_save(const hyptk_run* run, const char* path);
HYPTK_API hyptk_status hyptk_run_export_disk(const hyptk_run* run, const char* path,
                                             const char* format);
HYPTK_API int64_t hyptk_run_epoch(const hyptk_run* run);
/* Epoch count the run trains to. */
HYPTK_API int64_t hyptk_run_target_epochs(const hyptk_run* run);
HYPTK_API double hyptk_run_loss(const hyptk_run* run);
HYPTK_API double hyptk_run_accuracy(const hyptk_run* run);
HYPTK_API double hyptk_run_distortion(const hyptk_run* run);
HYPTK_API double hyptk_run_curvature(const hyptk_run* run);

/* Geometry on row-major batches of n points of dimension dim. Points must lie
 * inside the ball; outputs have the same layout (distance: n values). */
HYPTK_API hyptk_status hyptk_manifold_create(const char* kind, double c, hyptk_manifold** out);
HYPTK_API void hyptk_manifold_destroy(hyptk_manifold* manifold);
HYPTK_API hyptk_status hyptk_mobius_add(const hyptk_manifold* m, const double* x, const double* y,
                                        size_t n, size_t dim, double* out);
HYPTK_API hyptk_status hyptk_distance(const hyptk_manifold* m, const double* x, const double* y,
                                      size_t n, size_t dim, double* out);
HYPTK_API hyptk_status hyptk_expmap0(const hyptk_manifold* m, const double* v, size_t n,
                                     size_t dim, double* out);
HYPTK_API hyptk_status hyptk_logmap0(const hyptk_manifold* m, const double* x, size_t n,
                                     size_t dim, double* out);

#ifdef __cplusplus
}
#endif

#endif /* HYPTK_H */
