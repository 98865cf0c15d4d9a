#ifndef GEOSUP_H
#define GEOSUP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result of every call.
 */
typedef enum GeosupStatus {
  GEOSUP_STATUS_OK = 0,
  GEOSUP_STATUS_NULL_POINTER = 1,
  GEOSUP_STATUS_INVALID_INPUT = 2,
  GEOSUP_STATUS_DIMENSION_MISMATCH = 3,
  GEOSUP_STATUS_DEGENERATE = 4,
  GEOSUP_STATUS_NON_FINITE = 5,
  GEOSUP_STATUS_CONFIG = 6,
  GEOSUP_STATUS_EMPTY_EVALUATION = 7,
  /**
   * File could not be read or written.
   */
  GEOSUP_STATUS_IO = 8,
  /**
   * File contents are malformed.
   */
  GEOSUP_STATUS_FORMAT = 9,
  GEOSUP_STATUS_PANIC = 10,
} GeosupStatus;

/**
 * Evaluation region.
 */
typedef enum GeosupCrop {
  GEOSUP_CROP_FULL = 0,
  GEOSUP_CROP_GARG = 1,
} GeosupCrop;

/**
 * Why a refinement stopped.
 */
typedef enum GeosupTermination {
  GEOSUP_TERMINATION_NO_OBJECTIVE = 0,
  GEOSUP_TERMINATION_MAX_ITERATIONS = 1,
  GEOSUP_TERMINATION_CONVERGED = 2,
  GEOSUP_TERMINATION_LINE_SEARCH_STALLED = 3,
} GeosupTermination;

/**
 * Pinhole camera.
 */
typedef struct GeosupCamera GeosupCamera;

/**
 * Refinement and geometric-loss settings.
 */
typedef struct GeosupConfig GeosupConfig;

/**
 * Geometric losses of a labeled depth map.
 */
typedef struct GeosupSiglTotals {
  double hp;
  double vp;
  double total;
  size_t regions;
  size_t skipped_regions;
} GeosupSiglTotals;

/**
 * Error and accuracy metrics over the valid pixels of one depth map.
 */
typedef struct GeosupMetrics {
  double abs_rel;
  double sq_rel;
  double rmse;
  double rmse_log;
  double log10;
  double a1;
  double a2;
  double a3;
  size_t valid;
} GeosupMetrics;

/**
 * Outcome of a refinement.
 */
typedef struct GeosupRefineSummary {
  size_t iterations;
  enum GeosupTermination termination;
  double initial_total;
  double final_total;
} GeosupRefineSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null after a success. The pointer
 * stays valid until the next call on the same thread.
 */
const char *geosup_last_error(void);

/**
 * Static name of a status code.
 */
const char *geosup_status_name(enum GeosupStatus status);

/**
 * Library version string.
 */
const char *geosup_version(void);

/**
 * Creates a camera with focal lengths, principal point (pixel centers at integers) and
 * image size.
 *
 * # Safety
 * `out_camera` must be a valid pointer to writable storage for a handle.
 */
enum GeosupStatus geosup_camera_new(double fx,
                                    double fy,
                                    double cx,
                                    double cy,
                                    size_t width,
                                    size_t height,
                                    struct GeosupCamera **out_camera);

/**
 * Releases a camera. Null is ignored.
 *
 * # Safety
 * `camera` must come from [`geosup_camera_new`] and not be used afterwards.
 */
void geosup_camera_free(struct GeosupCamera *camera);

/**
 * Creates a configuration with default weights and optimizer settings.
 *
 * # Safety
 * `out_config` must be a valid pointer to writable storage for a handle.
 */
enum GeosupStatus geosup_config_new(struct GeosupConfig **out_config);

/**
 * Loads a key-value configuration file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out_config` writable.
 */
enum GeosupStatus geosup_config_load(const char *path,
                                     struct GeosupConfig **out_config);

/**
 * Releases a configuration. Null is ignored.
 *
 * # Safety
 * `config` must come from this library and not be used afterwards.
 */
void geosup_config_free(struct GeosupConfig *config);

/**
 * Sets the four term weights. Invalid values leave the configuration unchanged.
 *
 * # Safety
 * `config` must be a live handle.
 */
enum GeosupStatus geosup_config_set_weights(struct GeosupConfig *config,
                                            double photometric,
                                            double smoothness,
                                            double hp,
                                            double vp);

/**
 * Sets the iteration budget and the initial step size.
 *
 * # Safety
 * `config` must be a live handle.
 */
enum GeosupStatus geosup_config_set_optimizer(struct GeosupConfig *config,
                                              size_t max_iterations,
                                              double learning_rate);

/**
 * Number of sampled vertical directions; 0 selects the exact eigenvalue solver.
 *
 * # Safety
 * `config` must be a live handle.
 */
enum GeosupStatus geosup_config_set_directions(struct GeosupConfig *config,
                                               size_t directions);

/**
 * Horizontal-plane loss of `count` points.
 *
 * # Safety
 * `points` holds `3 * count` doubles, `gravity` 3, `out_loss` is writable.
 */
enum GeosupStatus geosup_loss_hp(const double *points_xyz,
                                 size_t count,
                                 const double *gravity,
                                 double *out_loss);

/**
 * Exact vertical-plane loss and, if `out_normal` is not null, the fitted unit normal.
 *
 * # Safety
 * `points` holds `3 * count` doubles, `gravity` 3, `out_normal` null or 3 writable.
 */
enum GeosupStatus geosup_loss_vp_exact(const double *points_xyz,
                                       size_t count,
                                       const double *gravity,
                                       double *out_loss,
                                       double *out_normal);

/**
 * Vertical-plane loss minimized over `directions` evenly spaced directions.
 *
 * # Safety
 * `points` holds `3 * count` doubles, `gravity` 3, `out_loss` is writable.
 */
enum GeosupStatus geosup_loss_vp_sampled(const double *points_xyz,
                                         size_t count,
                                         const double *gravity,
                                         size_t directions,
                                         double *out_loss);

/**
 * Geometric losses of a depth map whose pixels carry CityScapes class ids.
 *
 * # Safety
 * `depth` and `class_ids` hold `width * height` entries of the camera size.
 */
enum GeosupStatus geosup_sigl_total(const struct GeosupCamera *camera,
                                    const struct GeosupConfig *config,
                                    const double *depth,
                                    const uint8_t *class_ids,
                                    const double *gravity,
                                    struct GeosupSiglTotals *out_totals);

/**
 * Camera-frame gravity `R_cb * R_bs * (0, 0, 1)`.
 *
 * # Safety
 * `r_cb` and `r_bs` hold 9 doubles, `out_gravity` 3 writable.
 */
enum GeosupStatus geosup_gravity_from_spatial(const double *r_cb,
                                              const double *r_bs,
                                              double *out_gravity);

/**
 * Spatial-to-body rotation from `count` paired accelerations (body and spatial frame).
 *
 * # Safety
 * `body_xyz` and `spatial_xyz` hold `3 * count` doubles, `out_r_bs` 9 writable.
 */
enum GeosupStatus geosup_estimate_r_bs(const double *body_xyz,
                                       const double *spatial_xyz,
                                       size_t count,
                                       double *out_r_bs);

/**
 * Metrics of a predicted depth map against ground truth. Ground-truth zeros are ignored;
 * `filter_by_cap` drops ground truth deeper than `cap`.
 *
 * # Safety
 * `pred` and `gt` hold `width * height` doubles, `out_metrics` is writable.
 */
enum GeosupStatus geosup_evaluate(const double *pred,
                                  const double *gt,
                                  size_t width,
                                  size_t height,
                                  double cap,
                                  bool filter_by_cap,
                                  enum GeosupCrop crop,
                                  struct GeosupMetrics *out_metrics);

/**
 * Refines `depth` in place against a rectified stereo pair of `channels`-channel images
 * with values in `[0, 1]`. `gravity` and `class_ids` may be null when the geometric
 * weights are zero.
 *
 * # Safety
 * `depth` holds `width * height` doubles, the images `width * height * channels`,
 * `class_ids` null or `width * height` bytes, `gravity` null or 3 doubles.
 */
enum GeosupStatus geosup_refine_stereo(const struct GeosupCamera *camera,
                                       const struct GeosupConfig *config,
                                       double *depth,
                                       const double *left,
                                       const double *right,
                                       size_t channels,
                                       double baseline,
                                       const double *gravity,
                                       const uint8_t *class_ids,
                                       struct GeosupRefineSummary *out_summary);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GEOSUP_H */
