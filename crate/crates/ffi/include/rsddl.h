/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef RSDDL_H
#define RSDDL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RsddlStatus {
  RSDDL_STATUS_OK = 0,
  RSDDL_STATUS_NULL_POINTER = 1,
  RSDDL_STATUS_INVALID_ARGUMENT = 2,
  RSDDL_STATUS_IO = 3,
  RSDDL_STATUS_FORMAT = 4,
  RSDDL_STATUS_DIVERGED = 5,
  RSDDL_STATUS_PANIC = 6,
} RsddlStatus;

// Opaque trained model.
typedef struct RsddlModel RsddlModel;

typedef uint32_t RsddlTrainer;

typedef uint32_t RsddlActivation;

typedef uint32_t RsddlDrop;

// Training options. Fill with [`rsddl_train_options_default`] and override
// fields. A zero sparsity budget means "derive from the architecture".
typedef struct RsddlTrainOptions {
  RsddlTrainer trainer;
  RsddlActivation activation;
  RsddlDrop drop;
  double drop_rate;
  double lambda;
  double mu;
  double gamma;
  double eta1;
  double eta2;
  size_t per_column_s;
  size_t row_s;
  size_t outer_iters;
  uint64_t seed;
} RsddlTrainOptions;

typedef uint32_t RsddlRule;

typedef struct RsddlScores {
  double overall_accuracy;
  double average_accuracy;
  double kappa;
} RsddlScores;

#define RSDDL_TRAINER_JOINT 0

#define RSDDL_TRAINER_GREEDY 1

#define RSDDL_ACTIVATION_TANH 0

#define RSDDL_ACTIVATION_IDENTITY 1

#define RSDDL_DROP_NONE 0

#define RSDDL_DROP_OUT 1

#define RSDDL_DROP_CONNECT 2

#define RSDDL_RULE_L0 0

#define RSDDL_RULE_L1 1

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *rsddl_version(void);

// Copy the calling thread's last error message into `buf` (truncated,
// always NUL-terminated when `len > 0`). Returns the full message length
// without the terminator, 0 if there is none.
//
// # Safety
// `buf` must be valid for `len` bytes or null.
size_t rsddl_last_error(char *buf, size_t len);

struct RsddlTrainOptions rsddl_train_options_default(void);

// Train a model on `n_samples` rows of length `dim`.
//
// # Safety
// `data` holds `n_samples * dim` doubles, `labels` `n_samples` entries,
// `atoms` `n_layers` entries; `options` may be null for defaults;
// `out_model` receives a handle to free with [`rsddl_model_free`].
enum RsddlStatus rsddl_train(const double *data,
                             size_t n_samples,
                             size_t dim,
                             const uint32_t *labels,
                             const size_t *atoms,
                             size_t n_layers,
                             const struct RsddlTrainOptions *options,
                             struct RsddlModel **out_model);

// # Safety
// `path` is a NUL-terminated UTF-8 path; `out_model` is writable.
enum RsddlStatus rsddl_model_load(const char *path, struct RsddlModel **out_model);

// # Safety
// `model` is a live handle; `path` is a NUL-terminated UTF-8 path.
enum RsddlStatus rsddl_model_save(const struct RsddlModel *model, const char *path);

// Release a handle. Null is ignored.
//
// # Safety
// `model` came from this library and is not used afterwards.
void rsddl_model_free(struct RsddlModel *model);

// Sample dimension the model expects, 0 for a null handle.
//
// # Safety
// `model` is a live handle or null.
size_t rsddl_model_input_dim(const struct RsddlModel *model);

// Length of an encoded feature, 0 for a null handle.
//
// # Safety
// `model` is a live handle or null.
size_t rsddl_model_feature_dim(const struct RsddlModel *model);

// # Safety
// `model` is a live handle or null.
size_t rsddl_model_num_classes(const struct RsddlModel *model);

// Encode one sample of length `dim` into `out` (length `feature_dim`).
//
// # Safety
// Buffers are valid for the stated lengths.
enum RsddlStatus rsddl_encode(const struct RsddlModel *model,
                              const double *x,
                              size_t dim,
                              double *out,
                              size_t out_len);

// Predict labels for `n_samples` rows of length `dim`.
//
// # Safety
// `data` holds `n_samples * dim` doubles and `out_labels` `n_samples`
// entries.
enum RsddlStatus rsddl_classify(const struct RsddlModel *model,
                                const double *data,
                                size_t n_samples,
                                size_t dim,
                                RsddlRule rule,
                                uint32_t *out_labels);

// OA, AA and Kappa of `predicted` against `truth`.
//
// # Safety
// Both label arrays hold `n` entries; `out` is writable.
enum RsddlStatus rsddl_scores(const uint32_t *truth,
                              const uint32_t *predicted,
                              size_t n,
                              struct RsddlScores *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RSDDL_H */
