/* C interface to the bteach library. All objects are opaque handles owned by
 * the caller and released with the matching *_free function. Every call that
 * can fail returns a bt_status; on failure bt_last_error() describes the
 * problem for the calling thread. Strings returned through char** are
 * NUL-terminated, heap-allocated, and released with bt_string_free. */
#ifndef BTEACH_H
#define BTEACH_H

#include <stddef.h>
#include <stdint.h>

#if defined(BTEACH_BUILDING_LIBRARY)
#define BT_API __attribute__((visibility("default")))
#else
#define BT_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum bt_status {
  BT_OK = 0,
  BT_INVALID_ARGUMENT = 1,
  BT_IO = 2,
  BT_FORMAT = 3,
  BT_NUMERIC = 4,
  BT_NO_QUALIFYING_CANDIDATE = 5,
  BT_ALL_MASKS_REJECTED = 6,
  BT_STATE = 7,
  BT_CLASSIFIER = 8,
  BT_INTERNAL = 99
} bt_status;

typedef struct bt_config bt_config;
typedef struct bt_store bt_store;
typedef struct bt_model bt_model;
typedef struct bt_server bt_server;

BT_API const char* bt_version(void);
BT_API const char* bt_last_error(void);
BT_API const char* bt_status_name(bt_status status);
BT_API void bt_string_free(char* s);

/* Configuration */
BT_API bt_status bt_config_load(const char* path, bt_config** out);
/* base_dir resolves relative paths; may be NULL. */
BT_API bt_status bt_config_parse(const char* json, const char* base_dir, bt_config** out);
/* Merges a JSON object into the configuration (RFC 7386 merge patch). */
BT_API bt_status bt_config_patch(bt_config* config, const char* json_patch);
BT_API bt_status bt_config_validate(const bt_config* config);
BT_API bt_status bt_config_to_json(const bt_config* config, char** out);
BT_API void bt_config_free(bt_config* config);

/* Commands. Each writes a JSON summary to *summary. */
BT_API bt_status bt_cmd_fit(const bt_config* config, char** summary);
BT_API bt_status bt_cmd_gen_trials(const bt_config* config, char** summary);
BT_API bt_status bt_cmd_saliency(const bt_config* config, const char* image_png, const char* label,
                                 const char* out_prefix, char** summary);
/* request: {"target", "y_star", "y_alt", "policy", "bin", "export_scores"} */
BT_API bt_status bt_cmd_select(const bt_config* config, const char* request_json, char** summary);
BT_API bt_status bt_cmd_metrics(const bt_config* config, const char* trialset, const char* responses,
                                char** summary);

/* Synthetic fixture (store, predictions, images, toy classifier, config.json).
 * options_json may be NULL for the defaults. */
BT_API bt_status bt_synth_write(const char* dir, const char* options_json, uint64_t seed);

/* Experiment server */
BT_API bt_status bt_server_create(const bt_config* config, bt_server** out);
/* Serves on a background thread; *port receives the bound port. */
BT_API bt_status bt_server_start(bt_server* server, int* port);
/* Serves on the calling thread until bt_server_stop. */
BT_API bt_status bt_server_run(bt_server* server);
BT_API void bt_server_stop(bt_server* server);
BT_API void bt_server_free(bt_server* server);

/* Feature stores and PLDA models */
BT_API bt_status bt_store_open(const char* path, bt_store** out);
BT_API size_t bt_store_size(const bt_store* store);
BT_API size_t bt_store_dim(const bt_store* store);
BT_API void bt_store_free(bt_store* store);

/* q = 0 picks min(dim, categories - 1). */
BT_API bt_status bt_model_fit(const bt_store* store, size_t q, bt_model** out);
BT_API bt_status bt_model_load(const char* path, bt_model** out);
BT_API bt_status bt_model_save(const bt_model* model, const char* path);
BT_API size_t bt_model_q(const bt_model* model);
/* Copies min(n, q) entries of psi. */
BT_API bt_status bt_model_psi(const bt_model* model, double* out, size_t n);
/* log f(u_target | u_a, u_b) for stored items. */
BT_API bt_status bt_pair_logdensity(const bt_model* model, const bt_store* store, const char* target_id,
                                    const char* a_id, const char* b_id, double* out);
BT_API void bt_model_free(bt_model* model);

#ifdef __cplusplus
}
#endif

#endif
