#ifndef RICHREP_H
#define RICHREP_H

#include <stddef.h>
#include <stdint.h>
#include <stdbool.h>

typedef enum RrStatus {
  RR_STATUS_OK = 0,
  RR_STATUS_NULL = 1,
  RR_STATUS_SHAPE = 2,
  RR_STATUS_PARAMETER = 3,
  RR_STATUS_DATA = 4,
  RR_STATUS_NUMERICAL = 5,
  RR_STATUS_DIVERGED = 6,
  RR_STATUS_FORMAT = 7,
  RR_STATUS_IO = 8,
  RR_STATUS_CONFIG = 9,
  RR_STATUS_SAMPLING = 10,
  RR_STATUS_PANIC = 11,
  RR_STATUS_UTF8 = 12,
  RR_STATUS_BUFFER = 13,
} RrStatus;

// Dense row-major matrix of doubles.
typedef struct RrMatrix RrMatrix;

typedef struct RrNetwork RrNetwork;

// A fitted linear probe.
typedef struct RrProbe RrProbe;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty after a success.
// The pointer stays valid until the next call on the same thread.
const char *rr_last_error(void);

// Library version as a static NUL-terminated string.
const char *rr_version(void);

// Copies `rows * cols` doubles from `data` (row-major) into a new matrix.
enum RrStatus rr_matrix_new(uintptr_t rows,
                            uintptr_t cols,
                            const double *data,
                            struct RrMatrix **out);

void rr_matrix_free(struct RrMatrix *m);

// Row count, or 0 for a null handle.
uintptr_t rr_matrix_rows(const struct RrMatrix *m);

uintptr_t rr_matrix_cols(const struct RrMatrix *m);

// Copies the matrix into `out`, which must hold at least `rows * cols`
// doubles.
enum RrStatus rr_matrix_copy_to(const struct RrMatrix *m, double *out, uintptr_t len);

// Fresh MLP with layer widths `sizes[0..n_sizes]` (input, hidden...,
// classes), initialized from `seed`.
enum RrStatus rr_network_mlp(const uintptr_t *sizes,
                             uintptr_t n_sizes,
                             bool cosine_head,
                             uint64_t seed,
                             struct RrNetwork **out);

enum RrStatus rr_network_load(const char *path, struct RrNetwork **out);

enum RrStatus rr_network_save(const struct RrNetwork *net, const char *path);

void rr_network_free(struct RrNetwork *net);

uintptr_t rr_network_input_dim(const struct RrNetwork *net);

uintptr_t rr_network_feature_dim(const struct RrNetwork *net);

uintptr_t rr_network_n_classes(const struct RrNetwork *net);

// Penultimate-layer representation of `x`.
enum RrStatus rr_network_features(const struct RrNetwork *net,
                                  const struct RrMatrix *x,
                                  struct RrMatrix **out);

enum RrStatus rr_network_logits(const struct RrNetwork *net,
                                const struct RrMatrix *x,
                                struct RrMatrix **out);

// Trains with cross-entropy in place. `config_json` is a training config
// object; the last epoch's mean loss goes to `final_loss` when non-null.
enum RrStatus rr_network_train(struct RrNetwork *net,
                               const struct RrMatrix *x,
                               const uintptr_t *labels,
                               uintptr_t n_labels,
                               const char *config_json,
                               double *final_loss);

// Column concatenation of the members' representations of `x`, in the
// order given.
enum RrStatus rr_cat_features(const struct RrNetwork *const *nets,
                              uintptr_t n_nets,
                              const struct RrMatrix *x,
                              struct RrMatrix **out);

// Fits an L2-regularized linear probe. A null `config_json` uses the
// defaults; `seed` fixes the starting point.
enum RrStatus rr_probe_fit(const struct RrMatrix *features,
                           const uintptr_t *labels,
                           uintptr_t n_labels,
                           const char *config_json,
                           uint64_t seed,
                           struct RrProbe **out);

void rr_probe_free(struct RrProbe *p);

// Regularized training objective at the fitted point, NaN for null.
double rr_probe_cost(const struct RrProbe *p);

bool rr_probe_converged(const struct RrProbe *p);

// Writes one predicted class per row of `x` into `out`.
enum RrStatus rr_probe_predict(const struct RrProbe *p,
                               const struct RrMatrix *x,
                               uintptr_t *out,
                               uintptr_t len);

// Optimal probe costs of `phi1`, `phi2` and their concatenation, written
// to `out[0..3]` in that order.
enum RrStatus rr_union_cost(const struct RrMatrix *phi1,
                            const struct RrMatrix *phi2,
                            const uintptr_t *labels,
                            uintptr_t n_labels,
                            const char *config_json,
                            double *out);

// Mean risk plus `beta` times the population variance of the risks.
enum RrStatus rr_vrex_objective(const double *risks, uintptr_t n, double beta, double *out);

// Runs an experiment config given as JSON text. A non-null `out_dir`
// overrides the config's output directory.
enum RrStatus rr_run_config_json(const char *config_json, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RICHREP_H */
