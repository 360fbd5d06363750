// Copyright (c) the iclp authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


/* C interface to the iclp library. Handles are opaque; every function that
 * can fail returns an iclp_status and leaves a message for iclp_last_error(). */
#ifndef ICLP_ICLP_H
#define ICLP_ICLP_H

#include <stddef.h>
#include <stdint.h>

#if defined(ICLP_BUILDING)
#define ICLP_API __attribute__((visibility("default")))
#else
#define ICLP_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum iclp_status {
  ICLP_OK = 0,
  ICLP_ERR_USAGE = 1,   /* bad arguments or configuration */
  ICLP_ERR_DATA = 2,    /* unreadable or malformed input files */
  ICLP_ERR_NUMERIC = 3, /* non-finite values, failed invariants */
  ICLP_ERR_INTERNAL = 4
} iclp_status;

typedef struct iclp_config iclp_config;
typedef struct iclp_pathway iclp_pathway;

typedef void (*iclp_log_fn)(const char* line, void* user);

/* Message of the last failed call on this thread; "" if none. */
ICLP_API const char* iclp_last_error(void);
ICLP_API const char* iclp_version(void);

/* Progress lines from long-running commands. NULL disables logging. */
ICLP_API void iclp_set_log(iclp_log_fn fn, void* user);

/* Table of every configuration key with its default. */
ICLP_API const char* iclp_config_help(void);

/* path may be NULL for all defaults. */
ICLP_API iclp_status iclp_config_create(const char* path, iclp_config** out);
/* key is "section.name", e.g. "train.epochs". */
ICLP_API iclp_status iclp_config_set(iclp_config* cfg, const char* key, const char* value);
ICLP_API iclp_status iclp_config_digest(const iclp_config* cfg, uint64_t* out);
/* Resolved canonical dump. Copies at most cap bytes including the NUL and
 * stores the full length (without NUL) in *needed. */
ICLP_API iclp_status iclp_config_canonical(const iclp_config* cfg, char* buf, size_t cap, size_t* needed);
ICLP_API void iclp_config_destroy(iclp_config* cfg);

/* Commands. Outputs go to run.out_dir unless stated. */
ICLP_API iclp_status iclp_gen_data(const iclp_config* cfg, const char* out_dir);
ICLP_API iclp_status iclp_decompose(const char* image, const char* op, const char* out_png);
ICLP_API iclp_status iclp_train(const iclp_config* cfg);
ICLP_API iclp_status iclp_probe(const iclp_config* cfg, const char* const* checkpoints, size_t n);
/* Each model is "name=a.ckpt,b.ckpt". */
ICLP_API iclp_status iclp_perturb(const iclp_config* cfg, const char* const* models, size_t n);
ICLP_API iclp_status iclp_ablate(const iclp_config* cfg);
ICLP_API iclp_status iclp_plot(const char* metrics_csv, const char* out_dir);

/* Frozen image pathway loaded from a checkpoint. */
ICLP_API iclp_status iclp_pathway_load(const char* checkpoint, iclp_pathway** out);
ICLP_API size_t iclp_pathway_dim(const iclp_pathway* p);
ICLP_API const char* iclp_pathway_name(const iclp_pathway* p);
/* rgb is [3,h,w] planar in [0,1]; out receives dim floats. Uses the patch
 * geometry of cfg (NULL for defaults). */
ICLP_API iclp_status iclp_pathway_features(const iclp_pathway* p, const iclp_config* cfg, const float* rgb, size_t h,
                                           size_t w, float* out, size_t cap);
ICLP_API void iclp_pathway_destroy(iclp_pathway* p);

#ifdef __cplusplus
}
#endif

#endif /* ICLP_ICLP_H */
