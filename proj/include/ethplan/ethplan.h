/* C interface to the ethplan engine. All handles are opaque; every call that
 * can fail returns an ethp_status and leaves a message for ethp_last_error(). */
#ifndef ETHPLAN_ETHPLAN_H
#define ETHPLAN_ETHPLAN_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define ETHP_API __declspec(dllexport)
#else
#define ETHP_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Values match the command-line exit codes. */
typedef enum ethp_status {
  ETHP_OK = 0,
  ETHP_ERR_CONFIG = 1,
  ETHP_ERR_SCENARIO = 2,
  ETHP_ERR_DIVERGENCE = 3,
  ETHP_ERR_GRADCHECK = 4,
  ETHP_ERR_ARGUMENT = 5,
  ETHP_ERR_INTERNAL = 6
} ethp_status;

typedef struct ethp_session ethp_session;
typedef struct ethp_scenario ethp_scenario;

ETHP_API const char* ethp_version(void);

/* Message of the last failed call on this thread; empty when none. */
ETHP_API const char* ethp_last_error(void);

ETHP_API ethp_status ethp_session_open(const char* config_path, ethp_session** out);
ETHP_API void ethp_session_close(ethp_session* s);

/* Dotted-key override; the value is read as JSON, or as a string if it is
 * not valid JSON. */
ETHP_API ethp_status ethp_session_set(ethp_session* s, const char* key, const char* value);
ETHP_API ethp_status ethp_session_set_output_dir(ethp_session* s, const char* dir);
ETHP_API ethp_status ethp_session_set_seed(ethp_session* s, uint64_t seed);
ETHP_API ethp_status ethp_session_set_jobs(ethp_session* s, int jobs);

/* Copies the effective config document into buf (NUL-terminated, truncated
 * to cap); returns the full length through *len when len is not NULL. */
ETHP_API ethp_status ethp_session_effective_config(const ethp_session* s, char* buf, size_t cap,
                                                   size_t* len);

/* JSON text of one dotted key of the effective config, copied as above. */
ETHP_API ethp_status ethp_session_get(const ethp_session* s, const char* key, char* buf, size_t cap,
                                      size_t* len);

ETHP_API ethp_status ethp_run(ethp_session* s);
ETHP_API ethp_status ethp_train(ethp_session* s);
/* eps <= 0 keeps the configured step. ETHP_ERR_GRADCHECK when the maximum
 * relative error exceeds the configured tolerance. */
ETHP_API ethp_status ethp_gradcheck(ethp_session* s, double eps, double* max_rel_error);
/* grid_spec "key=v1,v2;key2=v3"; NULL or "" uses sweep.grid from the config. */
ETHP_API ethp_status ethp_sweep(ethp_session* s, const char* grid_spec);

ETHP_API ethp_status ethp_scenario_load(const char* path, ethp_scenario** out);
ETHP_API void ethp_scenario_free(ethp_scenario* sc);
ETHP_API size_t ethp_scenario_agent_count(const ethp_scenario* sc);
ETHP_API ethp_status ethp_scenario_violation_count(const ethp_scenario* sc, size_t* count);

#ifdef __cplusplus
}
#endif

#endif /* ETHPLAN_ETHPLAN_H */
