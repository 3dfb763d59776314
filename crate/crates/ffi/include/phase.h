#ifndef PHASE_H
#define PHASE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum PhaseStatus {
  PHASE_STATUS_OK = 0,
  PHASE_STATUS_NULL_POINTER = 1,
  PHASE_STATUS_INVALID_ARGUMENT = 2,
  PHASE_STATUS_IO = 3,
  PHASE_STATUS_PARSE = 4,
  PHASE_STATUS_CONFIG = 5,
  PHASE_STATUS_NUMERIC_FAILURE = 6,
  PHASE_STATUS_PANIC = 7,
} PhaseStatus;

// A trained field loaded from a checkpoint.
typedef struct PhaseField PhaseField;

// An extracted zero level set (contour in 2D, triangle mesh in 3D).
typedef struct PhaseLevelSet PhaseLevelSet;

// The four distances between two point sets.
typedef struct PhaseMetrics {
  double chamfer_one_sided;
  double chamfer;
  double hausdorff_one_sided;
  double hausdorff;
} PhaseMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread (empty if none). Valid until the next
// failing call on the same thread.
const char *phase_last_error(void);

// Library version as a static NUL-terminated string.
const char *phase_version(void);

// Loads a checkpoint into a new field handle written to `*out`.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum PhaseStatus phase_field_load(const char *path, struct PhaseField **out);

// Releases a field handle; null is ignored.
//
// # Safety
// `field` must come from [`phase_field_load`] and not be used afterwards.
void phase_field_free(struct PhaseField *field);

// Spatial dimension of the field (0 for a null handle).
//
// # Safety
// `field` must be null or a live handle.
uint32_t phase_field_dim(const struct PhaseField *field);

// Phase-field width the field was trained with (NaN for a null handle).
//
// # Safety
// `field` must be null or a live handle.
double phase_field_epsilon(const struct PhaseField *field);

// Evaluates `u` at `n` points (`n * dim` coordinates). `grad_out` may be null; otherwise
// it receives `n * dim` gradient entries.
//
// # Safety
// Buffers must hold the stated number of `double`s.
enum PhaseStatus phase_field_eval(const struct PhaseField *field,
                                  const double *points,
                                  uintptr_t n,
                                  double *u_out,
                                  double *grad_out);

// Evaluates the viscous signed distance `w` at `n` points.
//
// # Safety
// Buffers must hold the stated number of `double`s.
enum PhaseStatus phase_field_eval_distance(const struct PhaseField *field,
                                           const double *points,
                                           uintptr_t n,
                                           double *w_out);

// Extracts the zero level set on a grid with `resolution` cells per axis over the
// checkpoint's domain.
//
// # Safety
// `field` must be a live handle and `out` a valid pointer.
enum PhaseStatus phase_field_extract(const struct PhaseField *field,
                                     uintptr_t resolution,
                                     struct PhaseLevelSet **out);

// Releases a level-set handle; null is ignored.
//
// # Safety
// `ls` must come from [`phase_field_extract`] and not be used afterwards.
void phase_levelset_free(struct PhaseLevelSet *ls);

// Contour length (2D) or surface area (3D); fails on an empty level set.
//
// # Safety
// `ls` must be a live handle and `out` a valid pointer.
enum PhaseStatus phase_levelset_measure(const struct PhaseLevelSet *ls, double *out);

// Writes the level set as OBJ (3D) or `polyline,x,y` CSV (2D).
//
// # Safety
// `ls` must be a live handle and `path` a NUL-terminated string.
enum PhaseStatus phase_levelset_write(const struct PhaseLevelSet *ls, const char *path);

// Chamfer and Hausdorff distances between `na` points `a` and `nb` points `b`.
//
// # Safety
// `a` and `b` must hold `na * dim` and `nb * dim` doubles; `out` must be valid.
enum PhaseStatus phase_metrics(const double *a,
                               uintptr_t na,
                               const double *b,
                               uintptr_t nb,
                               uintptr_t dim,
                               struct PhaseMetrics *out);

// Surface tension constant of the double well by trapezoid quadrature.
//
// # Safety
// `out` must be a valid pointer.
enum PhaseStatus phase_sigma0(uintptr_t quad_points, double *out);

// Runs a full training from a config file, as the `train` command does.
//
// # Safety
// `config_path` must be a NUL-terminated string.
enum PhaseStatus phase_train(const char *config_path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PHASE_H */
