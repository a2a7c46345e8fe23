/* Copyright 2026 The simtpe Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/* C interface of the simtpe library. Every call returns a simt_status; on
 * failure simt_last_error() describes the problem for the calling thread.
 * Handles are opaque and owned by the caller. */

#ifndef SIMTPE_SIMTPE_H_
#define SIMTPE_SIMTPE_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define SIMT_API __declspec(dllexport)
#else
#define SIMT_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum simt_status {
  SIMT_OK = 0,
  SIMT_INVALID_ARGUMENT = 1,
  SIMT_IO_ERROR = 2,
  SIMT_FORMAT_ERROR = 3,
  SIMT_DIVERGED = 4,
  SIMT_INTERNAL_ERROR = 5
} simt_status;

SIMT_API const char* simt_status_string(simt_status status);
/* Message of the last failed call on this thread, "" if none. */
SIMT_API const char* simt_last_error(void);
SIMT_API const char* simt_version(void);

typedef struct simt_model simt_model;
typedef struct simt_session simt_session;

/* ---- synthetic data ---- */

typedef struct simt_synth_options {
  int vocab_size;
  int min_length;
  int max_length;
  uint64_t mapping_seed;
  double swap_prob;
  double insert_prob;
  size_t train_size;
  size_t dev_size;
  size_t test_size;
  uint64_t seed;
} simt_synth_options;

SIMT_API void simt_synth_options_init(simt_synth_options* options);
/* Writes {train,dev,test}.{src,tgt} into out_dir, which must exist. */
SIMT_API simt_status simt_generate_corpus(const simt_synth_options* options,
                                          const char* out_dir);

/* ---- training ---- */

typedef enum simt_path_mode {
  SIMT_PATH_DISTURBED = 0,
  SIMT_PATH_MULTIPATH = 1,
  SIMT_PATH_FULL = 2
} simt_path_mode;

typedef struct simt_train_options {
  const char* source_path;
  const char* target_path;
  /* Checkpoint to continue from, or NULL to start fresh. */
  const char* init_model_path;
  int64_t min_count;
  int shared_vocab;
  /* Architecture, used when starting fresh. */
  int d_model;
  int d_ff;
  int layers;
  int heads;
  int capsule_dim; /* 0: d_model / 2 */
  int translated_capsules;
  int untranslated_capsules;
  int routing_iters;
  /* Optimisation. */
  double lambda_segment;
  double lambda_token;
  int r;
  double lr;
  double warmup_init_lr;
  int64_t warmup;
  double adam_beta1;
  double adam_beta2;
  double adam_eps;
  double weight_decay;
  double label_smoothing;
  double dropout;
  size_t max_tokens;
  int max_epochs;
  int64_t max_steps; /* 0: unlimited */
  double max_seconds; /* 0: unlimited */
  simt_path_mode path_mode;
  uint64_t seed;
} simt_train_options;

typedef struct simt_train_report {
  int64_t steps;
  int epochs;
  double final_nll;
  double final_total;
  double seconds;
} simt_train_report;

SIMT_API void simt_train_options_init(simt_train_options* options);
/* Applies a "key = value" config file on top of options. */
SIMT_API simt_status simt_train_options_load(simt_train_options* options,
                                             const char* config_path);
/* Trains and writes the model to model_path (plus its two vocabulary files)
 * and, when loss_csv_path is not NULL, the per-step loss history. */
SIMT_API simt_status simt_train(const simt_train_options* options,
                                const char* model_path,
                                const char* loss_csv_path,
                                simt_train_report* report);

/* ---- models ---- */

typedef struct simt_model_info {
  int source_vocab;
  int target_vocab;
  int d_model;
  int layers;
  size_t parameter_count;
} simt_model_info;

/* Loads a checkpoint and the vocabularies stored next to it
 * (<path>.src.vocab and <path>.tgt.vocab). */
SIMT_API simt_status simt_model_load(const char* path, simt_model** out);
SIMT_API simt_status simt_model_save(const simt_model* model, const char* path);
SIMT_API simt_status simt_model_info_get(const simt_model* model,
                                         simt_model_info* info);
SIMT_API void simt_model_free(simt_model* model);

/* ---- decoding ---- */

typedef enum simt_policy { SIMT_POLICY_WAITK = 0, SIMT_POLICY_PE = 1 } simt_policy;

typedef struct simt_decode_options {
  simt_policy policy;
  int k;
  double rho;
  int r;
  int max_len; /* 0: 2 * source length + 10 */
} simt_decode_options;

SIMT_API void simt_decode_options_init(simt_decode_options* options);

/* Translates every line of source_path into output_path. When trace_dir is
 * not NULL one trace TSV per sentence is written there as NNNNNN.tsv. */
SIMT_API simt_status simt_translate_file(const simt_model* model,
                                         const simt_decode_options* options,
                                         const char* source_path,
                                         const char* output_path,
                                         const char* trace_dir);

typedef enum simt_action {
  SIMT_ACTION_READ = 0,
  SIMT_ACTION_WRITE = 1,
  SIMT_ACTION_NEED_INPUT = 2,
  SIMT_ACTION_DONE = 3
} simt_action;

/* Streaming decoder. The model must outlive the session. */
SIMT_API simt_status simt_session_create(const simt_model* model,
                                         const simt_decode_options* options,
                                         simt_session** out);
SIMT_API simt_status simt_session_push(simt_session* session, const char* token);
SIMT_API simt_status simt_session_finish(simt_session* session);
/* Takes one action. For SIMT_ACTION_WRITE *token points at the emitted
 * token, valid for the lifetime of the model; otherwise it is NULL. */
SIMT_API simt_status simt_session_step(simt_session* session, simt_action* action,
                                       const char** token);
SIMT_API void simt_session_free(simt_session* session);

/* ---- evaluation ---- */

typedef struct simt_eval_report {
  double bleu;
  double al;       /* NaN without traces */
  double r_target; /* NaN without a model and traces */
  double r_source;
  size_t sentences;
} simt_eval_report;

/* BLEU of hypothesis_path against reference_path. With source_path and
 * trace_dir also computes AL; with a model as well, the overlapping rates
 * (top sizes <= 0 select the corpus-derived defaults). */
SIMT_API simt_status simt_evaluate_files(const char* hypothesis_path,
                                         const char* reference_path,
                                         const char* source_path,
                                         const char* trace_dir,
                                         const simt_model* model, int top_target,
                                         int top_source, simt_eval_report* report);

typedef struct simt_sweep_options {
  const int* waitk_ks;
  size_t waitk_count;
  const int* pe_ks;
  size_t pe_count;
  const double* rhos;
  size_t rho_count;
  int r;
  int with_overlap;
  int top_target;
  int top_source;
  size_t max_sentences; /* 0: all */
} simt_sweep_options;

SIMT_API void simt_sweep_options_init(simt_sweep_options* options);
/* Evaluates the grid on a parallel corpus and writes the CSV sorted by AL. */
SIMT_API simt_status simt_sweep(const simt_model* model,
                                const simt_sweep_options* options,
                                const char* source_path,
                                const char* target_path, const char* csv_path);

#ifdef __cplusplus
}
#endif

#endif /* SIMTPE_SIMTPE_H_ */
