#ifndef SHORTCLUST_H
#define SHORTCLUST_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every exported function.
typedef enum ScStatus {
  SC_STATUS_OK = 0,
  SC_STATUS_NULL_POINTER = 1,
  SC_STATUS_INVALID_UTF8 = 2,
  SC_STATUS_INVALID_ARGUMENT = 3,
  SC_STATUS_PARSE = 4,
  SC_STATUS_IO = 5,
  SC_STATUS_NUMERIC = 6,
  SC_STATUS_CLUSTERING = 7,
  SC_STATUS_PANIC = 8,
} ScStatus;

// Weight mode for [`ScClusterOptions`].
typedef enum ScWeightMode {
  SC_WEIGHT_MODE_DERIVED = 0,
  SC_WEIGHT_MODE_PAPER_LITERAL = 1,
} ScWeightMode;

// Loaded corpus.
typedef struct ScCorpus ScCorpus;

// Loaded word vectors.
typedef struct ScEmbeddings ScEmbeddings;

// Result of [`sc_run_trials`].
typedef struct ScReport ScReport;

// Settings for [`sc_cluster_vectors`]. Start from
// [`sc_cluster_options_default`].
typedef struct ScClusterOptions {
  size_t k;
  double alpha;
  double margin;
  size_t max_iters;
  double tol;
  uint64_t seed;
  enum ScWeightMode weight_mode;
} ScClusterOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. Owned by the
// library and valid until the next call.
const char *sc_last_error(void);

// Releases a string returned by this library.
void sc_string_free(char *s);

// Adjusted mutual information of two labelings of `n` items.
enum ScStatus sc_ami(const size_t *labels, const size_t *clusters, size_t n, double *result);

// Clustering accuracy under the best one-to-one label mapping.
enum ScStatus sc_acc(const size_t *labels, const size_t *clusters, size_t n, double *result);

// Minimum-cost assignment for a row-major `rows x cols` matrix with
// `rows <= cols`. Writes the matched column of each row to
// `assignment[0..rows]`.
enum ScStatus sc_hungarian(const double *cost,
                           size_t rows,
                           size_t cols,
                           size_t *assignment,
                           double *total);

// Default options for `k` clusters.
struct ScClusterOptions sc_cluster_options_default(size_t k);

// Semi-supervised k-means on fixed row-major `n x p` vectors.
//
// `labeled_docs[i]` carries label `labeled_labels[i]` for `i < n_labeled`;
// pass zero labels and `alpha = 1` for plain k-means. Writes `n` cluster ids
// and, when non-null, the final objective.
enum ScStatus sc_cluster_vectors(const double *vectors,
                                 size_t n,
                                 size_t p,
                                 const size_t *labeled_docs,
                                 const size_t *labeled_labels,
                                 size_t n_labeled,
                                 const struct ScClusterOptions *options,
                                 size_t *assignments,
                                 double *objective);

// Loads a corpus. `format` is `"tsv"`, `"jsonl"` or NULL to guess from the
// file extension.
enum ScStatus sc_corpus_load(const char *path, const char *format, struct ScCorpus **corpus);

// Number of documents, or 0 for NULL.
size_t sc_corpus_len(const struct ScCorpus *corpus);

// Number of distinct labels, or 0 for NULL.
size_t sc_corpus_num_labels(const struct ScCorpus *corpus);

void sc_corpus_free(struct ScCorpus *corpus);

// Loads word vectors in text format. The dimension is read from the file.
// When `corpus` is non-null only words occurring in it are kept.
enum ScStatus sc_embeddings_load(const char *path,
                                 const struct ScCorpus *corpus,
                                 uint64_t seed,
                                 struct ScEmbeddings **embeddings);

// Vector dimension, or 0 for NULL.
size_t sc_embeddings_dim(const struct ScEmbeddings *embeddings);

void sc_embeddings_free(struct ScEmbeddings *embeddings);

// Runs an experiment configured by a TOML string (NULL for defaults).
// `embeddings` may be NULL for the bag-of-words baselines.
enum ScStatus sc_run_trials(const struct ScCorpus *corpus,
                            const struct ScEmbeddings *embeddings,
                            const char *config_toml,
                            struct ScReport **report);

// Mean AMI and ACC over trials. Either output may be NULL.
enum ScStatus sc_report_summary(const struct ScReport *report, double *ami_mean, double *acc_mean);

// Number of trials, or 0 for NULL.
size_t sc_report_trials(const struct ScReport *report);

// Report as JSON. Release the string with [`sc_string_free`].
enum ScStatus sc_report_json(const struct ScReport *report, char **json);

void sc_report_free(struct ScReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SHORTCLUST_H */
