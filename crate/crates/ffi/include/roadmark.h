#ifndef ROADMARK_H
#define ROADMARK_H

/* Generated by cbindgen from the roadmark-ffi crate; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum RmStatus {
  RM_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  RM_STATUS_NULL_ARGUMENT = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  RM_STATUS_INVALID_UTF8 = 2,
  /**
   * An index or buffer length is out of range.
   */
  RM_STATUS_OUT_OF_RANGE = 3,
  RM_STATUS_USAGE = 10,
  RM_STATUS_CONFIG = 11,
  RM_STATUS_STRUCTURAL = 20,
  RM_STATUS_SCHEMA = 21,
  RM_STATUS_CORRUPT = 22,
  RM_STATUS_IO = 23,
  RM_STATUS_DEGENERATE = 24,
  RM_STATUS_PANIC = 99,
} RmStatus;

typedef enum RmProfile {
  RM_PROFILE_TEST_TRACK = 0,
  RM_PROFILE_HIGHWAY = 1,
} RmProfile;

typedef enum RmChannel {
  RM_CHANNEL_REFLECTIVITY = 0,
  RM_CHANNEL_INTENSITY = 1,
} RmChannel;

/**
 * Point label codes used in label buffers.
 */
typedef enum RmLabel {
  RM_LABEL_ROAD = 0,
  RM_LABEL_MARKING = 1,
  RM_LABEL_OTHER = 2,
} RmLabel;

/**
 * Opaque point cloud.
 */
typedef struct RmCloud RmCloud;

/**
 * Opaque pipeline configuration.
 */
typedef struct RmConfig RmConfig;

/**
 * Opaque output of one pipeline run.
 */
typedef struct RmFrameResult RmFrameResult;

/**
 * One return. Clouds are row-major by ring, then column.
 */
typedef struct RmPoint {
  double x;
  double y;
  double z;
  double range;
  float intensity;
  uint16_t reflectivity;
  uint16_t ring;
  uint16_t col;
  bool valid;
} RmPoint;

typedef struct RmLine {
  double anchor[3];
  double direction[3];
  uint64_t support;
  bool accepted;
} RmLine;

/**
 * Stage durations in milliseconds.
 */
typedef struct RmTimings {
  double prefilter_ms;
  double plane_ms;
  double region_ms;
  double threshold_ms;
  double lines_ms;
  double total_ms;
} RmTimings;

/**
 * Point-level scores; an undefined ratio is NaN.
 */
typedef struct RmScore {
  uint64_t tp;
  uint64_t fp;
  uint64_t fn_;
  double precision;
  double recall;
  double f1;
} RmScore;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *rm_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *rm_version(void);

/**
 * Reads a cloud file in text or binary layout.
 */
enum RmStatus rm_cloud_read(const char *path, struct RmCloud **out);

/**
 * Builds a cloud from points in strictly increasing `(ring, col)` order.
 * Missing slots are allowed.
 */
enum RmStatus rm_cloud_from_points(uint16_t n_layers,
                                   uint16_t n_cols,
                                   const struct RmPoint *points,
                                   size_t len,
                                   struct RmCloud **out);

/**
 * Generates frame `index` of a synthetic suite. When `truth` is non-null
 * it receives one label code per point and must hold `truth_len` bytes.
 */
enum RmStatus rm_scene_frame(enum RmProfile profile,
                             uint64_t seed,
                             size_t index,
                             struct RmCloud **out,
                             uint8_t *truth,
                             size_t truth_len);

/**
 * Number of point slots, dropouts included. Zero for a null handle.
 */
size_t rm_cloud_len(const struct RmCloud *cloud);

/**
 * Copies point `index` into `out`.
 */
enum RmStatus rm_cloud_point(const struct RmCloud *cloud, size_t index, struct RmPoint *out);

void rm_cloud_free(struct RmCloud *cloud);

/**
 * Configuration holding the default parameters.
 */
enum RmStatus rm_config_default(struct RmConfig **out);

/**
 * Parses a configuration from TOML text. Unknown keys are rejected.
 */
enum RmStatus rm_config_from_toml(const char *text, struct RmConfig **out);

enum RmStatus rm_config_set_seed(struct RmConfig *config, uint64_t seed);

enum RmStatus rm_config_set_channel(struct RmConfig *config, enum RmChannel channel);

void rm_config_free(struct RmConfig *config);

/**
 * Runs the full pipeline on one cloud.
 */
enum RmStatus rm_run_frame(const struct RmCloud *cloud,
                           const struct RmConfig *config,
                           struct RmFrameResult **out);

/**
 * Number of labels the result holds, equal to the input cloud length.
 */
size_t rm_result_len(const struct RmFrameResult *result);

/**
 * Writes one label code per point into `out`, which must hold `out_len`
 * bytes with `out_len >= rm_result_len(result)`.
 */
enum RmStatus rm_result_labels(const struct RmFrameResult *result, uint8_t *out, size_t out_len);

/**
 * Number of points that passed the threshold stage.
 */
size_t rm_result_candidate_count(const struct RmFrameResult *result);

/**
 * Number of fitted lines, accepted or not.
 */
size_t rm_result_line_count(const struct RmFrameResult *result);

enum RmStatus rm_result_line(const struct RmFrameResult *result, size_t index, struct RmLine *out);

enum RmStatus rm_result_timings(const struct RmFrameResult *result, struct RmTimings *out);

void rm_result_free(struct RmFrameResult *result);

/**
 * Scores two label-code buffers of equal length `len`.
 */
enum RmStatus rm_evaluate(const uint8_t *predicted,
                          const uint8_t *truth,
                          size_t len,
                          struct RmScore *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ROADMARK_H */
