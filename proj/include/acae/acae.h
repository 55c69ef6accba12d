// Copyright 2026 The ACAE Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// =============================================================================

/* C interface to the ACAE library. All handles are opaque; every function
 * that can fail returns an acae_status and records a message retrievable with
 * acae_last_error() on the calling thread. */

#ifndef ACAE_ACAE_H_
#define ACAE_ACAE_H_

#include <stddef.h>

#if defined(_WIN32)
#define ACAE_API __declspec(dllexport)
#else
#define ACAE_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum acae_status {
  ACAE_OK = 0,
  ACAE_ERR_INVALID_ARGUMENT = 1,
  ACAE_ERR_DIMENSION = 2,
  ACAE_ERR_IO = 3,
  ACAE_ERR_PARSE = 4,
  ACAE_ERR_NUMERICAL = 5,
  ACAE_ERR_COLD_PAIR = 6,
  ACAE_ERR_CONFIG = 7,
  ACAE_ERR_INTERNAL = 99
} acae_status;

typedef enum acae_embedding {
  ACAE_EMBED_INTRA = 0,
  ACAE_EMBED_INTER = 1,
  ACAE_EMBED_FINAL = 2
} acae_embedding;

typedef struct acae_config acae_config;
typedef struct acae_dataset acae_dataset;
typedef struct acae_model acae_model;
typedef struct acae_report acae_report;

ACAE_API const char* acae_version(void);
/* Message of the most recent failure on this thread; "" if none. */
ACAE_API const char* acae_last_error(void);
ACAE_API const char* acae_status_name(acae_status status);

/* ---- configuration ---------------------------------------------------- */
ACAE_API acae_status acae_config_create(acae_config** out);
ACAE_API void acae_config_destroy(acae_config* config);
ACAE_API acae_status acae_config_load_file(acae_config* config, const char* path);
/* Unknown keys fail with ACAE_ERR_CONFIG. */
ACAE_API acae_status acae_config_set(acae_config* config, const char* key, const char* value);
/* Copies the value (NUL-terminated) into buf when it fits; *needed receives
 * the full length including the terminator. */
ACAE_API acae_status acae_config_get(const acae_config* config, const char* key, char* buf,
                                     size_t capacity, size_t* needed);
/* Validates every section; reports the first offending key. */
ACAE_API acae_status acae_config_validate(const acae_config* config);
/* Sorted key=value lines; valid until the config is modified or destroyed. */
ACAE_API const char* acae_config_effective(acae_config* config);

/* ---- datasets --------------------------------------------------------- */
ACAE_API acae_status acae_dataset_generate(const acae_config* config, acae_dataset** out);
ACAE_API acae_status acae_dataset_load(const char* path, acae_dataset** out);
ACAE_API acae_status acae_dataset_save(const acae_dataset* dataset, const char* path);
ACAE_API void acae_dataset_destroy(acae_dataset* dataset);
ACAE_API size_t acae_dataset_image_count(const acae_dataset* dataset);
ACAE_API size_t acae_dataset_dim(const acae_dataset* dataset);

/* ---- models ----------------------------------------------------------- */
/* Freshly initialized head from the acae.* settings and the root seed. */
ACAE_API acae_status acae_model_create(const acae_config* config, acae_model** out);
ACAE_API acae_status acae_model_load(const char* path, acae_model** out);
ACAE_API acae_status acae_model_save(const acae_model* model, const char* path);
ACAE_API void acae_model_destroy(acae_model* model);
ACAE_API size_t acae_model_dim(const acae_model* model);
/* Runs the head on a pair of row-major feature sets (n x dim and m x dim)
 * and writes the requested embedding of each side into out_a (n x dim) and
 * out_b (m x dim). Either output may be NULL. */
ACAE_API acae_status acae_model_forward(const acae_model* model, const double* a, size_t n,
                                        const double* b, size_t m, size_t dim,
                                        acae_embedding which, double* out_a, double* out_b);

/* ---- pipelines -------------------------------------------------------- */
/* Trains a fresh head on the training split. checkpoint_path may be NULL. */
ACAE_API acae_status acae_train(const acae_config* config, const acae_dataset* dataset,
                                const char* checkpoint_path, acae_model** out_model,
                                acae_report** out_report);
/* Side-by-side appearance baseline, ACAE and delta. */
ACAE_API acae_status acae_evaluate(const acae_config* config, const acae_dataset* dataset,
                                   const acae_model* model, acae_report** out);
/* kind: "lambda", "subsets", "rerank" or "all". */
ACAE_API acae_status acae_sweep(const acae_config* config, const acae_dataset* dataset,
                                const acae_model* model, const char* kind, acae_report** out);
ACAE_API acae_status acae_gradcheck(const acae_config* config, acae_report** out);
ACAE_API acae_status acae_bench(const acae_config* config, const acae_dataset* dataset,
                                const acae_model* model, acae_report** out);

/* ---- reports ---------------------------------------------------------- */
ACAE_API void acae_report_destroy(acae_report* report);
/* Deterministic plain-text body. */
ACAE_API const char* acae_report_text(const acae_report* report);
/* Machine-readable rows, one record per configuration. */
ACAE_API const char* acae_report_csv(const acae_report* report);
/* Wall-clock measurements, kept apart so the text stays reproducible. */
ACAE_API const char* acae_report_timing(const acae_report* report);
/* 1 when every check in the report passed (gradcheck), otherwise 0. */
ACAE_API int acae_report_passed(const acae_report* report);
/* Numeric cell of the row whose first column equals row_key. */
ACAE_API acae_status acae_report_value(const acae_report* report, const char* row_key,
                                       const char* column, double* out);

#ifdef __cplusplus
}
#endif

#endif /* ACAE_ACAE_H_ */
