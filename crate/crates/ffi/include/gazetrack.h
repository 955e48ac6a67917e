#ifndef GAZETRACK_H
#define GAZETRACK_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Result code of every call.
typedef enum GtStatus {
  GT_STATUS_OK = 0,
  GT_STATUS_NULL_POINTER = 1,
  GT_STATUS_INVALID_INPUT = 2,
  GT_STATUS_DEGENERATE_DESIGN = 3,
  GT_STATUS_UNDEFINED_DISPARITY = 4,
  GT_STATUS_LOST = 5,
  GT_STATUS_NO_INTERSECTION = 6,
  GT_STATUS_LINE_IN_PLANE = 7,
  GT_STATUS_CONSTRUCTION = 8,
  GT_STATUS_IO = 9,
  GT_STATUS_PANIC = 10,
} GtStatus;

// Fitted gaze-to-screen mapping.
typedef struct GtModel GtModel;

// Single-eye tracker with its calibration.
typedef struct GtTracker GtTracker;

// Screen size in pixels and millimetres.
typedef struct GtScreen {
  double width_px;
  double height_px;
  double width_mm;
  double height_mm;
} GtScreen;

// One calibration point: grid index 1..=25, gaze vector and screen target.
typedef struct GtSample {
  uint32_t index;
  double vx;
  double vy;
  double sx;
  double sy;
} GtSample;

// Per-frame tracker output.
typedef struct GtEstimate {
  double sx;
  double sy;
  bool recalibrated;
  bool fallback;
} GtEstimate;

// Head pose: rotation angles in radians, translation in millimetres.
typedef struct GtPose {
  double wx;
  double wy;
  double wz;
  double tx;
  double ty;
  double tz;
} GtPose;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the calling thread's last error message into `buf` as a
// NUL-terminated string, truncating to `len - 1` bytes. Returns the full
// message length in bytes, excluding the terminator. `buf` may be null to
// query the length.
//
// # Safety
// `buf` must be null or point to at least `len` writable bytes.
size_t gt_last_error_message(char *buf, size_t len);

// Fits a mapping model (`"quadratic25"`, `"linear5"`, ...) to `count`
// calibration samples and stores a new handle in `out`.
//
// # Safety
// `model` must be a NUL-terminated string, `samples` must point to `count`
// samples and `out` must be writable.
enum GtStatus gt_model_fit(const char *model,
                           struct GtScreen screen,
                           const struct GtSample *samples,
                           size_t count,
                           struct GtModel **out);

// Maps a gaze vector to screen pixels.
//
// # Safety
// `model` must be a live handle; `out` must be writable.
enum GtStatus gt_model_predict(const struct GtModel *model,
                               double vx,
                               double vy,
                               struct GtEstimate *out);

// Releases a model handle. Null is ignored.
//
// # Safety
// `model` must be null or a handle from [`gt_model_fit`] not yet freed.
void gt_model_free(struct GtModel *model);

// Creates a tracker of the given kind (`"2d"`, `"2.5d"`, `"3d"`).
// `calibration_pose` may be null for the default pose.
//
// # Safety
// String arguments must be NUL-terminated, `samples` must point to `count`
// samples, `calibration_pose` must be null or valid, `out` writable.
enum GtStatus gt_tracker_new(const char *kind,
                             const char *model,
                             struct GtScreen screen,
                             const struct GtSample *samples,
                             size_t count,
                             const struct GtPose *calibration_pose,
                             struct GtTracker **out);

// Estimates the point of gaze for one frame. `pose` may be null for the
// 2D tracker and is required otherwise.
//
// # Safety
// `tracker` must be a live handle, `pose` null or valid, `out` writable.
enum GtStatus gt_tracker_process(struct GtTracker *tracker,
                                 uint64_t frame,
                                 double vx,
                                 double vy,
                                 const struct GtPose *pose,
                                 struct GtEstimate *out);

// Number of frames on which the tracker refitted its model.
//
// # Safety
// `tracker` must be a live handle; `out` writable.
enum GtStatus gt_tracker_refit_count(const struct GtTracker *tracker, size_t *out);

// Releases a tracker handle. Null is ignored.
//
// # Safety
// `tracker` must be null or a handle from [`gt_tracker_new`] not yet freed.
void gt_tracker_free(struct GtTracker *tracker);

// Locates the pupil centre in a row-major grey image with values in
// `[0, 1]`. The result is in image pixel coordinates.
//
// # Safety
// `pixels` must point to `width * height` values; `out_x`, `out_y` writable.
enum GtStatus gt_locate_eye_center(const double *pixels,
                                   size_t width,
                                   size_t height,
                                   double *out_x,
                                   double *out_y);

// Head rotation in degrees (horizontal, vertical) that sweeps the line of
// sight from the screen centre to its edge at `depth_mm`.
//
// # Safety
// `out_alpha` and `out_beta` must be writable.
enum GtStatus gt_natural_rotation_bounds(struct GtScreen screen,
                                         double depth_mm,
                                         double *out_alpha,
                                         double *out_beta);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GAZETRACK_H */
