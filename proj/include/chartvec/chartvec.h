#ifndef CHARTVEC_CHARTVEC_H
#define CHARTVEC_CHARTVEC_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define CHARTVEC_API __declspec(dllexport)
#else
#define CHARTVEC_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum chartvec_status {
  CHARTVEC_OK = 0,
  CHARTVEC_ERR_INVALID_ARGUMENT = 1,
  CHARTVEC_ERR_IO = 2,
  CHARTVEC_ERR_PARSE = 3,
  CHARTVEC_ERR_VALIDATION = 4,
  CHARTVEC_ERR_SHAPE = 5,
  CHARTVEC_ERR_VERSION = 6,
  CHARTVEC_ERR_DIVERGED = 7,
  CHARTVEC_ERR_NOT_FOUND = 8,
  CHARTVEC_ERR_DOMAIN = 9,
  CHARTVEC_ERR_INTERNAL = 10
} chartvec_status;

typedef struct chartvec_corpus chartvec_corpus;
typedef struct chartvec_vectors chartvec_vectors;
typedef struct chartvec_model chartvec_model;
typedef struct chartvec_index chartvec_index;

/* Message for the last failed call on this thread; never NULL. */
CHARTVEC_API const char* chartvec_last_error(void);
CHARTVEC_API const char* chartvec_status_name(chartvec_status status);
CHARTVEC_API const char* chartvec_version(void);

/* Releases any string returned through a char** out-parameter. */
CHARTVEC_API void chartvec_free_string(char* s);

/* Lowercase hex SHA-256 of a file's bytes; `out` must hold 65 chars. */
CHARTVEC_API chartvec_status chartvec_file_sha256(const char* path, char out[65]);

/* ---- facts and grammar ---- */

/* Tab-separated rule table, one `id lhs rhs` line per rule. */
CHARTVEC_API chartvec_status chartvec_grammar_dump(char** out);

/* Writes up to `capacity` rule ids of the fact's derivation; `*count` gets the
 * full length. Invalid facts fail with CHARTVEC_ERR_VALIDATION. */
CHARTVEC_API chartvec_status chartvec_fact_derive(const char* fact_json, int* rules,
                                                  size_t capacity, size_t* count);

/* ---- corpus ---- */

/* Strict unless `lenient`. On CHARTVEC_ERR_VALIDATION, `*report` (if given)
 * receives one line per violation; in lenient mode it lists dropped items. */
CHARTVEC_API chartvec_status chartvec_corpus_load(const char* path, int lenient,
                                                  chartvec_corpus** out, char** report);
CHARTVEC_API void chartvec_corpus_free(chartvec_corpus* corpus);
CHARTVEC_API size_t chartvec_corpus_visualizations(const chartvec_corpus* corpus);
CHARTVEC_API size_t chartvec_corpus_charts(const chartvec_corpus* corpus);
CHARTVEC_API size_t chartvec_corpus_datasets(const chartvec_corpus* corpus);

/* Dataset-level split; `fraction` in (0, 1). */
CHARTVEC_API chartvec_status chartvec_corpus_split(const chartvec_corpus* corpus,
                                                   double fraction, uint64_t seed,
                                                   chartvec_corpus** train,
                                                   chartvec_corpus** test);

/* Writes the corpus in canonical JSON form. */
CHARTVEC_API chartvec_status chartvec_corpus_save(const chartvec_corpus* corpus, const char* path);

/* Converts a Calliope-style export to the corpus format and writes it. */
CHARTVEC_API chartvec_status chartvec_import_calliope(const char* in_path, const char* out_path);

/* ---- word vectors ---- */

CHARTVEC_API chartvec_status chartvec_vectors_load(const char* path, chartvec_vectors** out);
/* A store with no entries: every word takes the deterministic OOV path. */
CHARTVEC_API chartvec_status chartvec_vectors_empty(chartvec_vectors** out);
CHARTVEC_API void chartvec_vectors_free(chartvec_vectors* vectors);
CHARTVEC_API size_t chartvec_vectors_size(const chartvec_vectors* vectors);

/* ---- training ---- */

typedef struct chartvec_train_options {
  double alpha;
  double beta;
  double margin;
  double learning_rate;
  uint32_t batch_size;
  uint32_t epochs;
  uint64_t seed;
  int use_interpolation;
  int use_triplet;
  uint32_t negatives_per_window;
  const char* negative_policy; /* "same-dataset-first" or "any" */
  double dropout;
  const char* variant; /* ablation variant applied to the model, NULL for "full" */
} chartvec_train_options;

/* Fills in the defaults. */
CHARTVEC_API void chartvec_train_options_init(chartvec_train_options* options);

typedef struct chartvec_epoch {
  uint32_t epoch;
  double interp_term;
  double pair_term;
  double l1;
  double l2;
  double total;
  double wall_ms;
} chartvec_epoch;

typedef void (*chartvec_epoch_fn)(const chartvec_epoch* epoch, void* user);

CHARTVEC_API chartvec_status chartvec_train(const chartvec_corpus* corpus,
                                            const chartvec_vectors* vectors,
                                            const chartvec_train_options* options,
                                            chartvec_epoch_fn on_epoch, void* user,
                                            chartvec_model** out);

typedef struct chartvec_model_info {
  size_t embedding_dim;
  size_t parameters;
  uint64_t steps;
  size_t windows;
  size_t samples;
  size_t duplicates_removed;
  size_t peak_bytes;
} chartvec_model_info;

CHARTVEC_API chartvec_status chartvec_model_info_get(const chartvec_model* model,
                                                     chartvec_model_info* info);
/* `epoch,interp_term,pair_term,l1,l2,total,wall_ms` history of a trained model. */
CHARTVEC_API chartvec_status chartvec_model_history_csv(const chartvec_model* model, char** out);
CHARTVEC_API chartvec_status chartvec_model_save(const chartvec_model* model, const char* path);
CHARTVEC_API chartvec_status chartvec_model_load(const char* path, chartvec_model** out);
CHARTVEC_API void chartvec_model_free(chartvec_model* model);

/* ---- embedding index and retrieval ---- */

CHARTVEC_API chartvec_status chartvec_embed(const chartvec_model* model,
                                            const chartvec_corpus* corpus,
                                            const chartvec_vectors* vectors,
                                            chartvec_index** out);
CHARTVEC_API chartvec_status chartvec_index_save(const chartvec_index* index, const char* path);
CHARTVEC_API chartvec_status chartvec_index_load(const char* path, chartvec_index** out);
CHARTVEC_API void chartvec_index_free(chartvec_index* index);
CHARTVEC_API size_t chartvec_index_size(const chartvec_index* index);
CHARTVEC_API size_t chartvec_index_dim(const chartvec_index* index);

typedef struct chartvec_neighbor {
  const char* chart_id; /* owned by the index */
  double distance;
} chartvec_neighbor;

/* `scope` is "same-dataset" or "all". Free the result with chartvec_neighbors_free. */
CHARTVEC_API chartvec_status chartvec_nearest(const chartvec_index* index, const char* anchor,
                                              const char* scope, size_t k,
                                              chartvec_neighbor** out, size_t* count);
CHARTVEC_API void chartvec_neighbors_free(chartvec_neighbor* neighbors);

typedef struct chartvec_metrics {
  double top2;
  double top3;
  double cooccurrence;
  size_t n_anchors;
  size_t excluded;
} chartvec_metrics;

CHARTVEC_API chartvec_status chartvec_evaluate(const chartvec_index* index, size_t gap2,
                                               size_t gap3, chartvec_metrics* out);
/* Expected metrics of uniformly random same-dataset retrieval. */
CHARTVEC_API chartvec_status chartvec_random_baseline(const chartvec_index* index, size_t gap2,
                                                      size_t gap3, chartvec_metrics* out);
/* JSON report (with per-anchor rows when `details`) and an aligned text table. */
CHARTVEC_API chartvec_status chartvec_evaluate_report(const chartvec_index* index, size_t gap2,
                                                      size_t gap3, int details, char** json,
                                                      char** table);

/* ---- ablation ---- */

typedef struct chartvec_ablation_options {
  double test_fraction; /* 0 evaluates on the training corpus */
  uint64_t split_seed;
  size_t gap2;
  size_t gap3;
} chartvec_ablation_options;

CHARTVEC_API void chartvec_ablation_options_init(chartvec_ablation_options* options);

typedef struct chartvec_ablation_row {
  const char* variant; /* static string */
  int ok;
  double top2;
  double top3;
  double cooccurrence;
  double wall_ms;
  size_t peak_bytes;
} chartvec_ablation_row;

typedef void (*chartvec_variant_fn)(const chartvec_ablation_row* row, void* user);

/* Space-separated list of every variant name. */
CHARTVEC_API const char* chartvec_variant_names(void);

/* `variants` may be NULL to run every variant. Unknown names fail with
 * CHARTVEC_ERR_INVALID_ARGUMENT before anything runs. A failing variant does
 * not fail the call; `*failed` counts them. */
CHARTVEC_API chartvec_status chartvec_ablate(const chartvec_corpus* corpus,
                                             const chartvec_vectors* vectors,
                                             const chartvec_train_options* options,
                                             const chartvec_ablation_options* ablation,
                                             const char* const* variants, size_t n_variants,
                                             chartvec_variant_fn on_variant, void* user,
                                             char** csv, char** table, size_t* failed);

/* ---- gradient check ---- */

typedef struct chartvec_gradcheck_options {
  uint64_t seed;
  double epsilon;
  size_t coords_per_tensor;
  size_t samples;
  int inject_fault;
  double zero_floor; /* both gradients below this agree at zero */
} chartvec_gradcheck_options;

typedef struct chartvec_gradcheck_result {
  double max_relative_error;
  size_t checked;
  size_t near_zero; /* included in checked */
  size_t skipped;
} chartvec_gradcheck_result;

CHARTVEC_API void chartvec_gradcheck_options_init(chartvec_gradcheck_options* options);
CHARTVEC_API chartvec_status chartvec_gradcheck(const chartvec_gradcheck_options* options,
                                                chartvec_gradcheck_result* out);

#ifdef __cplusplus
}
#endif

#endif
