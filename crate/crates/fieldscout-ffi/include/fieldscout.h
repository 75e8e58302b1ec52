/* C interface for the fieldscout survey-planning library. */

#ifndef FIELDSCOUT_H
#define FIELDSCOUT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every call in this interface.
 */
typedef enum {
  /**
   * The call succeeded and all out-parameters are valid.
   */
  FS_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  FS_STATUS_NULL_POINTER = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  FS_STATUS_INVALID_UTF8 = 2,
  /**
   * An input was rejected: failed validation, unparseable content, or an
   * unknown name.
   */
  FS_STATUS_INVALID_ARGUMENT = 3,
  /**
   * A filesystem read or write failed.
   */
  FS_STATUS_IO_ERROR = 4,
  /**
   * The library panicked. No memory was leaked from the call, but any
   * out-parameter content is unspecified.
   */
  FS_STATUS_PANIC = 5,
} FsStatus;

/**
 * Opaque experiment configuration: camera, altitude ladder, oracle, time
 * model, field specs, and decision settings.
 */
typedef struct FsConfig FsConfig;

/**
 * Opaque labeled field raster.
 */
typedef struct FsField FsField;

/**
 * Opaque decision state: the two fitted GPs plus activity thresholds.
 */
typedef struct FsState FsState;

/**
 * Summary of a field raster.
 */
typedef struct {
  /**
   * Grid width in cells.
   */
  size_t width;
  /**
   * Grid height in cells.
   */
  size_t height;
  /**
   * Meters per cell.
   */
  double resolution_m_per_px;
  /**
   * World x of the south-west corner, meters.
   */
  double origin_x;
  /**
   * World y of the south-west corner, meters.
   */
  double origin_y;
  /**
   * Fraction of cells labeled crop or weed, in [0, 1].
   */
  double vegetation_ratio;
} FsFieldInfo;

/**
 * Action chosen for one survey image.
 */
typedef struct {
  /**
   * True when the planner wants a descent, false to continue the sweep.
   */
  bool descend;
  /**
   * Target GSD of the descent in m/px; NaN when `descend` is false.
   */
  double target_gsd;
  /**
   * Predicted mIoU gain behind the choice (0 below the activity range).
   */
  double predicted_gain;
} FsDecision;

/**
 * Aggregate outcome of one mission.
 */
typedef struct {
  /**
   * Field-level mIoU of the fused map, or NaN when no ground truth was
   * supplied.
   */
  double field_miou;
  /**
   * Mission duration in seconds.
   */
  double total_time_s;
  /**
   * Number of images captured.
   */
  size_t n_images;
  /**
   * Number of descents flown.
   */
  size_t n_descents;
} FsRunStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Returns the library version as a static NUL-terminated string.
 */
const char *fs_version(void);

/**
 * Returns the description of the most recent failure on the calling
 * thread, or an empty string when nothing has failed yet. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *fs_last_error_message(void);

/**
 * Loads and validates an experiment configuration from a TOML file.
 *
 * # Safety
 * `path` must point to a NUL-terminated string and `out` to writable
 * storage for one pointer. On success `*out` must later be released with
 * [`fs_config_free`].
 */
FsStatus fs_config_load(const char *path, FsConfig **out);

/**
 * Releases a configuration handle. Null is ignored.
 *
 * # Safety
 * `config` must be a handle from [`fs_config_load`] that has not been
 * freed, or null.
 */
void fs_config_free(FsConfig *config);

/**
 * Generates the field named `name` in the configuration's field list.
 *
 * # Safety
 * `config` must be a live configuration handle, `name` a NUL-terminated
 * string, and `out` writable storage for one pointer. On success `*out`
 * must later be released with [`fs_field_free`].
 */
FsStatus fs_field_generate(const FsConfig *config, const char *name, FsField **out);

/**
 * Loads a field raster from a PGM file.
 *
 * # Safety
 * `path` must point to a NUL-terminated string and `out` to writable
 * storage for one pointer. On success `*out` must later be released with
 * [`fs_field_free`].
 */
FsStatus fs_field_load(const char *path, FsField **out);

/**
 * Writes a field raster to `path` as binary PGM.
 *
 * # Safety
 * `field` must be a live field handle and `path` a NUL-terminated string.
 */
FsStatus fs_field_save(const FsField *field, const char *path);

/**
 * Fills `out` with the dimensions and vegetation ratio of a field.
 *
 * # Safety
 * `field` must be a live field handle and `out` writable storage for one
 * [`FsFieldInfo`].
 */
FsStatus fs_field_info(const FsField *field, FsFieldInfo *out);

/**
 * Scores `pred` against `gt` and writes the mean IoU over the classes
 * present. The grids must have identical shape, resolution, and origin.
 *
 * # Safety
 * `pred` and `gt` must be live field handles and `out` writable storage
 * for one double.
 */
FsStatus fs_field_miou(const FsField *pred, const FsField *gt, double *out);

/**
 * Releases a field handle. Null is ignored.
 *
 * # Safety
 * `field` must be an unfreed handle from this library, or null.
 */
void fs_field_free(FsField *field);

/**
 * Runs the training flight over `training` (which must have at least four
 * survey regions and some vegetation) and freezes the resulting decision
 * state, with any threshold overrides from the configuration applied.
 *
 * # Safety
 * `config` and `training` must be live handles and `out` writable storage
 * for one pointer. On success `*out` must later be released with
 * [`fs_state_free`].
 */
FsStatus fs_state_init(const FsConfig *config, const FsField *training, FsState **out);

/**
 * Writes a decision state to `path` as TOML.
 *
 * # Safety
 * `state` must be a live state handle and `path` a NUL-terminated string.
 */
FsStatus fs_state_save(const FsState *state, const char *path);

/**
 * Loads a decision state from a TOML file and refits its GPs.
 *
 * # Safety
 * `path` must point to a NUL-terminated string and `out` to writable
 * storage for one pointer. On success `*out` must later be released with
 * [`fs_state_free`].
 */
FsStatus fs_state_load(const char *path, FsState **out);

/**
 * Writes the activity thresholds of a decision state: ratios below
 * `v_lo` always continue, ratios at or above `v_hi` descend to the finest
 * rung whenever a positive gain is predicted.
 *
 * # Safety
 * `state` must be a live state handle; `v_lo` and `v_hi` must each point
 * to writable storage for one double.
 */
FsStatus fs_state_thresholds(const FsState *state, double *v_lo, double *v_hi);

/**
 * Evaluates the decision function for one survey image whose vegetation
 * ratio is `v`.
 *
 * # Safety
 * `state` must be a live state handle and `out` writable storage for one
 * [`FsDecision`].
 */
FsStatus fs_state_decide(const FsState *state, double v, FsDecision *out);

/**
 * Releases a state handle. Null is ignored.
 *
 * # Safety
 * `state` must be an unfreed handle from this library, or null.
 */
void fs_state_free(FsState *state);

/**
 * Flies one mission over `field` and fills `out` with the aggregate
 * outcome.
 *
 * `strategy` accepts the same labels as the CLI: "fixed:<cm>",
 * "non_adaptive", "linear", or "adaptive". `gt` may be null except for
 * fixed strategies, which need it for scoring; without it the reported
 * mIoU is NaN. `state` may be null for fixed strategies and is required
 * for the other three. When `trace_path` is non-null the full event log is
 * written there as JSON lines.
 *
 * # Safety
 * `config`, `field`, and non-null `gt`/`state` must be live handles;
 * `strategy` and non-null `trace_path` must be NUL-terminated strings;
 * `out` must be writable storage for one [`FsRunStats`].
 */
FsStatus fs_mission_run(const FsConfig *config,
                        const FsField *field,
                        const FsField *gt,
                        const FsState *state,
                        const char *strategy,
                        uint64_t seed,
                        const char *trace_path,
                        FsRunStats *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FIELDSCOUT_H */
