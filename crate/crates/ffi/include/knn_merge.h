#ifndef KNN_MERGE_H
#define KNN_MERGE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum KmStatus {
  KM_STATUS_OK = 0,
  KM_STATUS_NULL_POINTER = 1,
  KM_STATUS_INVALID_ARGUMENT = 2,
  KM_STATUS_IO = 3,
  KM_STATUS_FORMAT = 4,
  // A panic was caught at the boundary.
  KM_STATUS_INTERNAL = 5,
} KmStatus;

typedef enum KmMetric {
  KM_METRIC_L1 = 0,
  KM_METRIC_L2 = 1,
  KM_METRIC_COSINE = 2,
  KM_METRIC_JACCARD = 3,
} KmMetric;

// Opaque dataset handle.
typedef struct KmDataset KmDataset;

// Opaque k-NN graph handle.
typedef struct KmGraph KmGraph;

// Opaque search hierarchy handle.
typedef struct KmHierarchy KmHierarchy;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. Valid until the
// next failing call on the same thread.
const char *km_last_error(void);

// Uniform random dense dataset in [0, 1)^d.
//
// # Safety
// `out` must be valid for writes.
enum KmStatus km_dataset_generate(size_t n, size_t d, uint64_t seed, struct KmDataset **out);

// Dense dataset copied from `n` rows of `d` floats, row-major.
//
// # Safety
// `values` must point to `n * d` floats and `out` must be valid for writes.
enum KmStatus km_dataset_from_dense(const float *values,
                                    size_t n,
                                    size_t d,
                                    struct KmDataset **out);

// Loads an fvecs file (or sparse text for any other extension).
//
// # Safety
// `file` must be a NUL-terminated string and `out` valid for writes.
enum KmStatus km_dataset_load(const char *file, struct KmDataset **out);

// Number of records, or 0 for NULL.
//
// # Safety
// `ds` must be NULL or a live dataset handle.
size_t km_dataset_len(const struct KmDataset *ds);

// # Safety
// `ds` must be NULL or a handle not freed before.
void km_dataset_free(struct KmDataset *ds);

// NN-Descent over `ids` (all records when `ids` is NULL and `n_ids` is 0).
// `evaluations` may be NULL.
//
// # Safety
// Pointers must be valid for the given lengths; `out` valid for writes.
enum KmStatus km_nn_descent(const struct KmDataset *ds,
                            enum KmMetric metric,
                            const uint32_t *ids,
                            size_t n_ids,
                            size_t k,
                            uint64_t seed,
                            struct KmGraph **out,
                            uint64_t *evaluations);

// Exact graph over `ids` (all records when `ids` is NULL and `n_ids` is 0).
//
// # Safety
// As for [`km_nn_descent`].
enum KmStatus km_brute_force(const struct KmDataset *ds,
                             enum KmMetric metric,
                             const uint32_t *ids,
                             size_t n_ids,
                             size_t k,
                             struct KmGraph **out);

// Symmetric merge of two graphs over disjoint id sets. `r` is the fraction
// of each list refilled from the other set.
//
// # Safety
// Handles must be live; `out` valid for writes; `evaluations` may be NULL.
enum KmStatus km_s_merge(const struct KmDataset *ds,
                         const struct KmGraph *g,
                         const struct KmGraph *h,
                         double r,
                         uint64_t seed,
                         struct KmGraph **out,
                         uint64_t *evaluations);

// Joint merge of raw `ids` into `g`.
//
// # Safety
// As for [`km_s_merge`]; `ids` must hold `n_ids` values.
enum KmStatus km_j_merge(const struct KmDataset *ds,
                         const struct KmGraph *g,
                         const uint32_t *ids,
                         size_t n_ids,
                         double r,
                         uint64_t seed,
                         struct KmGraph **out,
                         uint64_t *evaluations);

// Number of vertices, or 0 for NULL.
//
// # Safety
// `g` must be NULL or a live graph handle.
size_t km_graph_len(const struct KmGraph *g);

// List capacity k, or 0 for NULL.
//
// # Safety
// `g` must be NULL or a live graph handle.
size_t km_graph_k(const struct KmGraph *g);

// Copies up to `cap` neighbors of vertex `id`, nearest first. `dists` may be
// NULL; `len` receives the number written.
//
// # Safety
// `ids` (and `dists` if given) must hold `cap` values; `len` valid for writes.
enum KmStatus km_graph_neighbors(const struct KmGraph *g,
                                 uint32_t id,
                                 uint32_t *ids,
                                 float *dists,
                                 size_t cap,
                                 size_t *len);

// Mean recall@k of `g` against `truth`.
//
// # Safety
// Handles must be live; `out` valid for writes.
enum KmStatus km_graph_recall(const struct KmGraph *g,
                              const struct KmGraph *truth,
                              size_t k,
                              double *out);

// # Safety
// `g` must be live and `file` NUL-terminated.
enum KmStatus km_graph_save(const struct KmGraph *g, const char *file);

// # Safety
// `file` must be NUL-terminated and `out` valid for writes.
enum KmStatus km_graph_load(const char *file, struct KmGraph **out);

// # Safety
// `g` must be NULL or a handle not freed before.
void km_graph_free(struct KmGraph *g);

// Builds layers of the given sizes (top first, last equal to the dataset
// size) by hierarchical merging, then diversifies them for search.
//
// # Safety
// `sizes` must hold `n_sizes` values; `out` valid for writes.
enum KmStatus km_hierarchy_build(const struct KmDataset *ds,
                                 enum KmMetric metric,
                                 size_t k,
                                 const size_t *sizes,
                                 size_t n_sizes,
                                 uint64_t seed,
                                 struct KmHierarchy **out);

// # Safety
// `dir` must be NUL-terminated and `out` valid for writes.
enum KmStatus km_hierarchy_load(const char *dir, struct KmHierarchy **out);

// # Safety
// `h` must be live and `dir` NUL-terminated.
enum KmStatus km_hierarchy_save(const struct KmHierarchy *h, const char *dir);

// Searches for a dense query of `dim` floats. Writes up to `cap` results
// nearest first; `dists` and `evaluations` may be NULL.
//
// # Safety
// `query` must hold `dim` floats, `ids` (and `dists`) `cap` values.
enum KmStatus km_hierarchy_search(const struct KmHierarchy *h,
                                  const struct KmDataset *ds,
                                  const float *query,
                                  size_t dim,
                                  size_t pool,
                                  uint64_t seed,
                                  uint32_t *ids,
                                  float *dists,
                                  size_t cap,
                                  size_t *len,
                                  uint64_t *evaluations);

// # Safety
// `h` must be NULL or a handle not freed before.
void km_hierarchy_free(struct KmHierarchy *h);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KNN_MERGE_H */
