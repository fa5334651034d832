#ifndef DCNV_H
#define DCNV_H

#include <stddef.h>
#include <stdint.h>

// Result codes shared by every function.
typedef enum dcnv_status {
  DCNV_STATUS_OK = 0,
  DCNV_STATUS_NULL_POINTER = 1,
  DCNV_STATUS_INVALID_ARGUMENT = 2,
  DCNV_STATUS_IO = 3,
  DCNV_STATUS_FORMAT = 4,
  DCNV_STATUS_INCOMPATIBLE = 5,
  DCNV_STATUS_SHAPE = 6,
  DCNV_STATUS_UNDEFINED = 7,
  DCNV_STATUS_BUFFER_TOO_SMALL = 8,
  DCNV_STATUS_PANIC = 9,
} dcnv_status;

// A loaded network (architecture plus parameters).
typedef struct dcnv_model dcnv_model;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *dcnv_version(void);

// Message of the last failed call on this thread, or null. The pointer
// stays valid until the next call on the same thread.
const char *dcnv_last_error(void);

// Load a checkpoint file into a new model handle.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum dcnv_status dcnv_model_load(const char *path, struct dcnv_model **out);

// Release a model. Null is ignored.
//
// # Safety
// `model` must come from [`dcnv_model_load`] and not be used afterwards.
void dcnv_model_free(struct dcnv_model *model);

// Write the model back to a checkpoint file.
//
// # Safety
// `model` must be a live handle and `path` a NUL-terminated string.
enum dcnv_status dcnv_model_save(const struct dcnv_model *model, const char *path);

// Input channels, stored image side and crop side of the model.
//
// # Safety
// `model` must be a live handle; output pointers must be valid or null.
enum dcnv_status dcnv_model_input(const struct dcnv_model *model,
                                  size_t *channels,
                                  size_t *resolution,
                                  size_t *crop);

// Number of output heads.
//
// # Safety
// `model` must be a live handle and `count` a valid pointer.
enum dcnv_status dcnv_model_head_count(const struct dcnv_model *model, size_t *count);

// Index of the head called `name`.
//
// # Safety
// `model` must be a live handle, `name` NUL-terminated, `index` valid.
enum dcnv_status dcnv_model_head_index(const struct dcnv_model *model,
                                       const char *name,
                                       size_t *index);

// Class count of one head; also the score buffer length it needs.
//
// # Safety
// `model` must be a live handle and `count` a valid pointer.
enum dcnv_status dcnv_model_class_count(const struct dcnv_model *model, size_t head, size_t *count);

// Eval-mode scores of one crop-sized image (`channels * crop * crop`
// values): softmax probabilities or per-class sigmoids.
//
// # Safety
// `image` must hold `image_len` values and `out` `out_len` values.
enum dcnv_status dcnv_model_predict(const struct dcnv_model *model,
                                    size_t head,
                                    const double *image,
                                    size_t image_len,
                                    double *out,
                                    size_t out_len);

// Late-fused video scores: the mean of the center-crop scores of
// `frame_count` stored-resolution frames (`channels * resolution *
// resolution` values each, back to back).
//
// # Safety
// `frames` must hold `frame_count` frames and `out` `out_len` values.
enum dcnv_status dcnv_model_predict_video(const struct dcnv_model *model,
                                          size_t head,
                                          const double *frames,
                                          size_t frame_count,
                                          double *out,
                                          size_t out_len);

// Average precision of one ranked list (`relevant[i]` non-zero marks a
// positive). Returns `DcnvStatus::Undefined` when there are no positives.
//
// # Safety
// `scores` and `relevant` must hold `n` values; `ap` must be valid.
enum dcnv_status dcnv_average_precision(const double *scores,
                                        const uint8_t *relevant,
                                        size_t n,
                                        double *ap);

// Run the finite-difference gradient suite; `passed` receives 1 if every
// check is within tolerance, else 0.
//
// # Safety
// `passed` must be a valid pointer.
enum dcnv_status dcnv_gradcheck(uint64_t seed, int32_t *passed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DCNV_H */
