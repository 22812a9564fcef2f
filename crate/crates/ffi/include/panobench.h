#ifndef PANOBENCH_H
#define PANOBENCH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PbGrade {
  PB_GRADE_S = 0,
  PB_GRADE_A = 1,
  PB_GRADE_B = 2,
  PB_GRADE_C = 3,
  PB_GRADE_D = 4,
} PbGrade;

typedef enum PbStatus {
  PB_STATUS_OK = 0,
  PB_STATUS_NULL_POINTER = 1,
  PB_STATUS_INVALID_INPUT = 2,
  PB_STATUS_DOMAIN = 3,
  PB_STATUS_STRUCTURAL = 4,
  PB_STATUS_IO = 5,
  PB_STATUS_EMPTY_REPORT = 6,
  PB_STATUS_BUFFER_TOO_SMALL = 7,
  PB_STATUS_INTERNAL = 99,
} PbStatus;

/**
 * Opaque class-index raster.
 */
typedef struct PbClassRaster PbClassRaster;

/**
 * Opaque equirectangular panorama.
 */
typedef struct PbPanorama PbPanorama;

/**
 * Opaque class registry.
 */
typedef struct PbRegistry PbRegistry;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *pb_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *pb_version(void);

/**
 * # Safety
 * `lon` and `lat` must be valid for writes.
 */
enum PbStatus pb_erp_to_sphere(double u,
                               double v,
                               size_t width,
                               size_t height,
                               double *lon,
                               double *lat);

/**
 * # Safety
 * `u` and `v` must be valid for writes.
 */
enum PbStatus pb_sphere_to_erp(double lon,
                               double lat,
                               size_t width,
                               size_t height,
                               double *u,
                               double *v);

/**
 * Builds a panorama from interleaved `[0,1]` samples, row-major.
 *
 * # Safety
 * `data` must point to `width * height * channels` floats; `out_pano` must
 * be valid for writes.
 */
enum PbStatus pb_panorama_new(size_t width,
                              size_t height,
                              size_t channels,
                              const float *data,
                              struct PbPanorama **out_pano);

/**
 * # Safety
 * `path` must be NUL-terminated; `out_pano` must be valid for writes.
 */
enum PbStatus pb_panorama_load_png(const char *path, struct PbPanorama **out_pano);

/**
 * # Safety
 * `pano` must come from this library and not be used afterwards. Null is a
 * no-op.
 */
void pb_panorama_free(struct PbPanorama *pano);

/**
 * # Safety
 * `pano` must be a live handle or null.
 */
size_t pb_panorama_width(const struct PbPanorama *pano);

/**
 * # Safety
 * `pano` must be a live handle or null.
 */
size_t pb_panorama_height(const struct PbPanorama *pano);

/**
 * # Safety
 * `pano` must be a live handle or null.
 */
size_t pb_panorama_channels(const struct PbPanorama *pano);

/**
 * # Safety
 * `pano` must be a live handle; `score` must be valid for writes.
 */
enum PbStatus pb_seam_continuity(const struct PbPanorama *pano, double *score);

/**
 * Renders a perspective view into `buf`, which must hold
 * `out_width * out_height * channels` floats. Angles are radians.
 *
 * # Safety
 * `pano` must be a live handle; `buf` must be valid for `buf_len` writes.
 */
enum PbStatus pb_render_nfov(const struct PbPanorama *pano,
                             double yaw,
                             double pitch,
                             double hfov,
                             size_t out_width,
                             size_t out_height,
                             float *buf,
                             size_t buf_len);

/**
 * # Safety
 * `out_registry` must be valid for writes.
 */
enum PbStatus pb_registry_default(struct PbRegistry **out_registry);

/**
 * # Safety
 * `path` must be NUL-terminated; `out_registry` must be valid for writes.
 */
enum PbStatus pb_registry_load(const char *path, struct PbRegistry **out_registry);

/**
 * Class id for `name`, or -1 when unknown.
 *
 * # Safety
 * `registry` must be a live handle; `name` must be NUL-terminated.
 */
int32_t pb_registry_id_of(const struct PbRegistry *registry, const char *name);

/**
 * # Safety
 * `registry` must come from this library and not be used afterwards. Null
 * is a no-op.
 */
void pb_registry_free(struct PbRegistry *registry);

/**
 * # Safety
 * `registry` must be a live handle; `data` must point to `width * height`
 * bytes; `out_raster` must be valid for writes.
 */
enum PbStatus pb_class_raster_new(const struct PbRegistry *registry,
                                  size_t width,
                                  size_t height,
                                  const uint8_t *data,
                                  struct PbClassRaster **out_raster);

/**
 * # Safety
 * `path` must be NUL-terminated; `registry` must be a live handle;
 * `out_raster` must be valid for writes.
 */
enum PbStatus pb_class_raster_load_png(const char *path,
                                       const struct PbRegistry *registry,
                                       struct PbClassRaster **out_raster);

/**
 * # Safety
 * `raster` must come from this library and not be used afterwards. Null is
 * a no-op.
 */
void pb_class_raster_free(struct PbClassRaster *raster);

/**
 * IoU of one class. `present` is set to false (and `iou` left untouched)
 * when the class is absent from both rasters.
 *
 * # Safety
 * Handles must be live; `iou` and `present` must be valid for writes.
 */
enum PbStatus pb_class_iou(const struct PbClassRaster *a,
                           const struct PbClassRaster *b,
                           uint8_t class_id,
                           double *iou,
                           bool *present);

/**
 * Unweighted mean IoU over the present classes of `classes`.
 *
 * # Safety
 * Handles must be live; `classes` must point to `n_classes` bytes;
 * `average` must be valid for writes.
 */
enum PbStatus pb_spatial_consistency_average(const struct PbClassRaster *pred,
                                             const struct PbClassRaster *reference,
                                             const uint8_t *classes,
                                             size_t n_classes,
                                             double *average);

/**
 * Unrounded weighted expert total and its grade.
 *
 * # Safety
 * `total` and `grade_out` must be valid for writes.
 */
enum PbStatus pb_expert_total(double aesthetic,
                              double spatial,
                              double plausibility,
                              double *total,
                              enum PbGrade *grade_out);

enum PbGrade pb_grade(double total);

/**
 * Composite reward with default normalizers. `weights` holds four values in
 * channel order, or is null for uniform weights.
 *
 * # Safety
 * `weights` must be null or point to 4 doubles; `reward` must be valid for
 * writes.
 */
enum PbStatus pb_composite_reward(double structural_iou,
                                  double omniaid,
                                  double longclip,
                                  double hpsv3,
                                  const double *weights,
                                  double *reward);

/**
 * # Safety
 * `p_single` and `p_multi` must be valid for writes.
 */
enum PbStatus pb_mix_schedule(uint64_t step,
                              uint64_t warmup_steps,
                              double *p_single,
                              double *p_multi);

/**
 * Masks a `grid_h × grid_w × channels` latent in place (row-major,
 * channels innermost) and reports how many blocks were kept.
 *
 * # Safety
 * `data` must point to `grid_h * grid_w * channels` floats; `kept_blocks`
 * must be null or valid for writes.
 */
enum PbStatus pb_latent_mask(float *data,
                             size_t grid_h,
                             size_t grid_w,
                             size_t channels,
                             double keep_prob,
                             size_t patch,
                             uint64_t seed,
                             size_t *kept_blocks);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PANOBENCH_H */
