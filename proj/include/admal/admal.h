/* C interface to the admal measurement pipeline. */
#ifndef ADMAL_ADMAL_H
#define ADMAL_ADMAL_H

#include <stddef.h>
#include <stdint.h>

#if defined(ADMAL_BUILDING_LIBRARY)
#define ADMAL_API __attribute__((visibility("default")))
#else
#define ADMAL_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum admal_status {
  ADMAL_OK = 0,
  ADMAL_E_INVALID_ARGUMENT = 1,
  ADMAL_E_SCHEMA = 2,
  ADMAL_E_IO = 3,
  ADMAL_E_STORAGE = 4,
  ADMAL_E_AUTH = 5,
  ADMAL_E_TRANSPORT = 6,
  ADMAL_E_IP_LITERAL = 7,
  ADMAL_E_INVALID_HOST = 8,
  ADMAL_E_MALFORMED_MESSAGE = 9,
  ADMAL_E_UNDEFINED = 10,
  ADMAL_E_ZERO_BASE = 11,
  ADMAL_E_EMPTY_INPUT = 12,
  ADMAL_E_UNKNOWN_CAMPAIGN = 13,
  ADMAL_E_BIND = 14,
  ADMAL_E_CONFIG = 15,
  ADMAL_E_INTERNAL = 100
} admal_status;

/* Message for the last failing call on this thread; "" if none. */
ADMAL_API const char* admal_last_error(void);
ADMAL_API const char* admal_status_name(admal_status s);
ADMAL_API const char* admal_version(void);

/* Strings returned through char** out-params are heap-allocated; release
 * them with admal_free_string. */
ADMAL_API void admal_free_string(char* s);

/* 0 = debug, 1 = info, 2 = warn, 3 = error */
ADMAL_API void admal_set_log_level(int level);

/* ---- pure helpers ---- */

/* Normalized host (FQDN) of an http(s) URL. */
ADMAL_API admal_status admal_extract_domain(const char* url, char** out_domain);

/* Truncated display percentage, e.g. "0.28". decimals is 1 or 2. */
ADMAL_API admal_status admal_percent(uint64_t count, uint64_t base, int decimals, char** out_text);

/* ---- pipeline ---- */

typedef struct admal_pipeline admal_pipeline;

ADMAL_API admal_status admal_pipeline_open(const char* config_path, admal_pipeline** out);
ADMAL_API void admal_pipeline_close(admal_pipeline* p);

/* Overrides; NULL leaves the configured value untouched. */
ADMAL_API admal_status admal_pipeline_set_campaign(admal_pipeline* p, const char* campaign_id);
ADMAL_API admal_status admal_pipeline_set_out_dir(admal_pipeline* p, const char* dir);
ADMAL_API admal_status admal_pipeline_set_limits(admal_pipeline* p, int max_inflight, double qps_per_provider);
/* Replaces the configured ad-list files when n > 0. */
ADMAL_API admal_status admal_pipeline_set_lists(admal_pipeline* p, const char* const* list_paths, size_t n);

/* Requests a clean stop of the running step. Async-signal-safe. */
ADMAL_API void admal_pipeline_request_stop(admal_pipeline* p);

/* Each step writes a JSON summary to *out_summary (may be NULL).
 * domains_path overrides the ingested corpus; NULL uses the default. */
ADMAL_API admal_status admal_pipeline_ingest(admal_pipeline* p, char** out_summary);
ADMAL_API admal_status admal_pipeline_dns_scan(admal_pipeline* p, const char* domains_path, char** out_summary);
ADMAL_API admal_status admal_pipeline_ti_fetch(admal_pipeline* p, const char* domains_path, char** out_summary);
/* Writes classification JSONL to out_path ("-" or NULL for stdout). */
ADMAL_API admal_status admal_pipeline_ads_classify(admal_pipeline* p, const char* domains_path, const char* out_path,
                                                   int record, char** out_summary);
ADMAL_API admal_status admal_pipeline_analyze(admal_pipeline* p, char** out_summary);
/* ingest, dns-scan, ti-fetch (unless ti mode is none), ad classification
 * (when lists are configured) and analyze, stopping early on request. */
ADMAL_API admal_status admal_pipeline_run_all(admal_pipeline* p, char** out_summary);
/* Analysis report JSON without writing files. */
ADMAL_API admal_status admal_pipeline_report_json(admal_pipeline* p, char** out_json);

/* ---- ad-list matcher ---- */

typedef struct admal_matcher admal_matcher;

/* mode: "strict" or "always". */
ADMAL_API admal_status admal_matcher_load(const char* const* list_paths, size_t n, const char* mode,
                                          admal_matcher** out);
ADMAL_API void admal_matcher_free(admal_matcher* m);
/* *out_is_ad is 1/0; *out_json (optional) receives the classification line. */
ADMAL_API admal_status admal_matcher_classify(const admal_matcher* m, const char* domain, int* out_is_ad,
                                              char** out_json);

/* ---- mock resolver farm ---- */

typedef struct admal_mockfarm admal_mockfarm;

/* config_json follows the farm config format; base_dir resolves blocklist files. */
ADMAL_API admal_status admal_mockfarm_start(const char* config_json, const char* base_dir, admal_mockfarm** out);
ADMAL_API size_t admal_mockfarm_size(const admal_mockfarm* f);
/* "ip:port" of provider i. */
ADMAL_API admal_status admal_mockfarm_endpoint(const admal_mockfarm* f, size_t i, char** out);
ADMAL_API admal_status admal_mockfarm_manifest(const admal_mockfarm* f, char** out_json);
ADMAL_API void admal_mockfarm_stop(admal_mockfarm* f);

#ifdef __cplusplus
}
#endif

#endif
