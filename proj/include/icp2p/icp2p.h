/* C interface to the federated continual-learning denoiser testbed.
 *
 * Usage pattern:
 *   icp2p_config* cfg = NULL;
 *   if (icp2p_config_parse_file("exp.cfg", &cfg) != ICP2P_OK) {
 *       fprintf(stderr, "%s\n", icp2p_last_error());
 *       return 1;
 *   }
 *   icp2p_result* res = NULL;
 *   if (icp2p_run(cfg, 11, &res) == ICP2P_OK) {
 *       char* json = NULL;
 *       icp2p_result_json(res, &json);
 *       ...
 *       icp2p_free(json);
 *       icp2p_result_free(res);
 *   }
 *   icp2p_config_free(cfg);
 *
 * All functions returning icp2p_status set a thread-local error message,
 * readable via icp2p_last_error(), when they fail. Strings returned through
 * char** out-parameters are heap-allocated and must be released with
 * icp2p_free(). Handles are opaque; NULL is never a valid handle argument.
 */
#ifndef ICP2P_H
#define ICP2P_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define ICP2P_API
#elif defined(ICP2P_BUILD)
#define ICP2P_API __attribute__((visibility("default")))
#else
#define ICP2P_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum icp2p_status {
    ICP2P_OK = 0,
    ICP2P_ERR_INVALID_ARGUMENT = 1, /* NULL handle or out-parameter */
    ICP2P_ERR_CONFIG = 2,           /* config parse or validation failure */
    ICP2P_ERR_SHAPE = 3,            /* structural misuse (sizes, ids, ...) */
    ICP2P_ERR_NUMERIC = 4,          /* non-finite values in the pipeline */
    ICP2P_ERR_PROTOCOL = 5,         /* peer-protocol or wire-format violation */
    ICP2P_ERR_IO = 6,               /* file system failure */
    ICP2P_ERR_INTERNAL = 7          /* anything else */
} icp2p_status;

/* One experiment description (method, training knobs, data recipe, seeds). */
typedef struct icp2p_config icp2p_config;

/* One finished run: per-institution metric trails plus serializations. */
typedef struct icp2p_result icp2p_result;

/* Library version string, static storage. */
ICP2P_API const char* icp2p_version(void);

/* Thread-local message for the most recent failure in this thread. Never
 * NULL; empty string when nothing failed yet. Valid until the next failing
 * call in the same thread. */
ICP2P_API const char* icp2p_last_error(void);

/* ---- configuration ---------------------------------------------------- */

ICP2P_API icp2p_status icp2p_config_parse_file(const char* path, icp2p_config** out);
ICP2P_API icp2p_status icp2p_config_parse_text(const char* text, icp2p_config** out);

/* Apply one "key" / "value" pair on top of the current state (same key
 * space as the config file). Re-validates the full config; on failure the
 * config is left unchanged. */
ICP2P_API icp2p_status icp2p_config_set(icp2p_config* cfg, const char* key, const char* value);

ICP2P_API icp2p_status icp2p_config_clone(const icp2p_config* cfg, icp2p_config** out);

/* Canonical full key = value listing (round-trips through parse_text). */
ICP2P_API icp2p_status icp2p_config_dump(const icp2p_config* cfg, char** out_text);

/* Seed list accessors: count, then each element by index. */
ICP2P_API icp2p_status icp2p_config_seed_count(const icp2p_config* cfg, size_t* out_count);
ICP2P_API icp2p_status icp2p_config_seed_at(const icp2p_config* cfg, size_t index,
                                            uint64_t* out_seed);

/* Configured output directory (config key output.dir). */
ICP2P_API icp2p_status icp2p_config_output_dir(const icp2p_config* cfg, char** out_dir);

/* Configured method name (config key method). */
ICP2P_API icp2p_status icp2p_config_method(const icp2p_config* cfg, char** out_method);

ICP2P_API void icp2p_config_free(icp2p_config* cfg);

/* ---- execution -------------------------------------------------------- */

/* Synthesize the configured datasets with base seed `seed`, run the
 * configured method with that seed, and return the result. Deterministic:
 * equal config + seed give byte-identical serializations. */
ICP2P_API icp2p_status icp2p_run(const icp2p_config* cfg, uint64_t seed, icp2p_result** out);

/* ---- results ---------------------------------------------------------- */

/* Canonical JSON report (no wall-clock or host-dependent content). */
ICP2P_API icp2p_status icp2p_result_json(const icp2p_result* res, char** out);

/* Per-run CSV: method,seed,cycle,institution,split,psnr,ssim,mse,rho. */
ICP2P_API icp2p_status icp2p_result_csv(const icp2p_result* res, char** out);

/* Canonical per-node message log; empty string for non-ring methods. */
ICP2P_API icp2p_status icp2p_result_transcript(const icp2p_result* res, char** out);

/* Wall-clock milliseconds of the run (not part of the canonical report). */
ICP2P_API icp2p_status icp2p_result_wall_ms(const icp2p_result* res, double* out_ms);

/* Joint CSV / fixed-width summary table over several results. */
ICP2P_API icp2p_status icp2p_compare_csv(const icp2p_result* const* results, size_t count,
                                         char** out);
ICP2P_API icp2p_status icp2p_summary_table(const icp2p_result* const* results, size_t count,
                                           char** out);

ICP2P_API void icp2p_result_free(icp2p_result* res);

/* ---- tools ------------------------------------------------------------ */

/* Run the build self-check suite. *out_ok becomes 1 iff every check passed;
 * *out_report (optional, may be NULL) receives the human-readable lines. */
ICP2P_API icp2p_status icp2p_validate(int* out_ok, char** out_report);

/* Write the configured synthetic datasets for base seed `seed` under `dir`
 * as 8-bit PGM images plus a manifest.txt describing every file. */
ICP2P_API icp2p_status icp2p_dump_data(const icp2p_config* cfg, uint64_t seed, const char* dir);

/* Release any string obtained from this library. Accepts NULL. */
ICP2P_API void icp2p_free(char* p);

#ifdef __cplusplus
}
#endif

#endif /* ICP2P_H */
