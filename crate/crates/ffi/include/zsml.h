#ifndef ZSML_H
#define ZSML_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ZsmlStatus {
  ZSML_STATUS_OK = 0,
  ZSML_STATUS_NULL_POINTER = 1,
  ZSML_STATUS_INVALID_ARGUMENT = 2,
  ZSML_STATUS_PARSE = 3,
  ZSML_STATUS_MISSING_LABEL = 4,
  ZSML_STATUS_SHAPE = 5,
  ZSML_STATUS_VALIDATION = 6,
  ZSML_STATUS_DOMAIN = 7,
  ZSML_STATUS_POWER_SET_CAP = 8,
  ZSML_STATUS_DIVERGENCE = 9,
  ZSML_STATUS_SINGULAR = 10,
  ZSML_STATUS_IO = 11,
  ZSML_STATUS_PANIC = 12,
} ZsmlStatus;

typedef enum ZsmlMethod {
  ZSML_METHOD_EXDAP = 0,
  ZSML_METHOD_DMP = 1,
  ZSML_METHOD_TRAMP = 2,
} ZsmlMethod;

typedef enum ZsmlRegressorKind {
  ZSML_REGRESSOR_KIND_JOINT = 0,
  ZSML_REGRESSOR_KIND_INDEPENDENT = 1,
} ZsmlRegressorKind;

/**
 * Label embeddings restricted to a vocabulary.
 */
typedef struct ZsmlEmbeddings ZsmlEmbeddings;

typedef struct ZsmlModel ZsmlModel;

/**
 * Power-set prototypes of a target vocabulary, with the raw label embeddings.
 */
typedef struct ZsmlPrototypes ZsmlPrototypes;

typedef struct ZsmlPredictOptions {
  size_t k_graph;
  double threshold;
  /**
   * 0 for cosine, 1 for Euclidean distance.
   */
  uint8_t euclidean;
  /**
   * 0 for sigma^2 = median squared distance, 1 for sigma = median distance.
   */
  uint8_t literal_sigma;
  /**
   * 0 lets prototypes link to any node, 1 only to test nodes.
   */
  uint8_t prototypes_link_test_only;
} ZsmlPredictOptions;

typedef struct ZsmlTrainOptions {
  size_t hidden_units;
  double learning_rate;
  size_t epochs;
  size_t batch_size;
  /**
   * Weight penalty; the ridge penalty for the independent regressor.
   */
  double l2_penalty;
  /**
   * 0 for Adam, 1 for plain gradient descent.
   */
  uint8_t use_sgd;
  uint64_t seed;
} ZsmlTrainOptions;

typedef struct ZsmlMetrics {
  double hamming_loss;
  double micro_f1;
  double ranking_loss;
  double average_precision;
  size_t ranking_skipped;
} ZsmlMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` (NUL
 * terminated, truncated to `len`) and returns the full message length, or
 * 0 when there is no error.
 */
size_t zsml_last_error_message(char *buf, size_t len);

/**
 * Loads the embeddings of `labels` from a `<count> <dim>` text file.
 */
enum ZsmlStatus zsml_embeddings_load(const char *path,
                                     const char *const *labels,
                                     size_t n_labels,
                                     struct ZsmlEmbeddings **out);

/**
 * Builds embeddings from a row-major `n_labels x dim` buffer.
 */
enum ZsmlStatus zsml_embeddings_new(const char *const *labels,
                                    size_t n_labels,
                                    const double *values,
                                    size_t dim,
                                    struct ZsmlEmbeddings **out);

enum ZsmlStatus zsml_embeddings_dim(const struct ZsmlEmbeddings *emb, size_t *out);

void zsml_embeddings_free(struct ZsmlEmbeddings *emb);

/**
 * Synthesizes one prototype per nonempty subset of the embeddings'
 * vocabulary (which becomes the target vocabulary).
 */
enum ZsmlStatus zsml_prototypes_build(const struct ZsmlEmbeddings *emb,
                                      struct ZsmlPrototypes **out);

/**
 * Number of prototypes and labels.
 */
enum ZsmlStatus zsml_prototypes_shape(const struct ZsmlPrototypes *protos,
                                      size_t *n_prototypes,
                                      size_t *n_labels);

/**
 * Returns refined prototypes: each moves to the mean of its `k` nearest rows
 * of the `n x dim` projection buffer.
 */
enum ZsmlStatus zsml_prototypes_self_train(const struct ZsmlPrototypes *protos,
                                           const double *y_hat,
                                           size_t n,
                                           size_t dim,
                                           size_t k,
                                           uint8_t euclidean,
                                           struct ZsmlPrototypes **out);

void zsml_prototypes_free(struct ZsmlPrototypes *protos);

/**
 * Default prediction options.
 */
struct ZsmlPredictOptions zsml_predict_options_default(void);

/**
 * Predicts label sets for `n` projected instances. Writes `n x m` scores
 * and binary labels, where `m` is the number of target labels.
 */
enum ZsmlStatus zsml_predict(const struct ZsmlPrototypes *protos,
                             enum ZsmlMethod method,
                             const double *y_hat,
                             size_t n,
                             size_t dim,
                             const struct ZsmlPredictOptions *options,
                             double *out_scores,
                             uint8_t *out_binary);

/**
 * Default joint training options.
 */
struct ZsmlTrainOptions zsml_train_options_default(void);

/**
 * Trains a regressor from row-major `n x d_in` features to `n x d_out`
 * word-space targets.
 */
enum ZsmlStatus zsml_model_train(enum ZsmlRegressorKind kind,
                                 const double *x,
                                 const double *y,
                                 size_t n,
                                 size_t d_in,
                                 size_t d_out,
                                 const struct ZsmlTrainOptions *options,
                                 struct ZsmlModel **out);

enum ZsmlStatus zsml_model_load(const char *path, struct ZsmlModel **out);

enum ZsmlStatus zsml_model_save(const struct ZsmlModel *model, const char *path);

enum ZsmlStatus zsml_model_dims(const struct ZsmlModel *model, size_t *d_in, size_t *d_out);

/**
 * Projects `n x d_in` features into the word space, writing `n x d_out`.
 */
enum ZsmlStatus zsml_model_predict(const struct ZsmlModel *model,
                                   const double *x,
                                   size_t n,
                                   size_t d_in,
                                   double *out_y);

void zsml_model_free(struct ZsmlModel *model);

/**
 * Evaluates `n x m` binary predictions and scores against truth.
 */
enum ZsmlStatus zsml_evaluate(const uint8_t *pred,
                              const double *scores,
                              const uint8_t *truth,
                              size_t n,
                              size_t m,
                              struct ZsmlMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ZSML_H */
