//! C ABI for the survey-planning library.
//!
//! Every function returns an [`FsStatus`]. On any status other than `Ok` a
//! description of the failure is stored per thread and can be read with
//! [`fs_last_error_message`]; out-parameters are written only on success.
//! Handles are opaque and must be released exactly once with their matching
//! `_free` function, which accepts null. Handles are not synchronized:
//! sharing one across threads requires external locking, though distinct
//! handles are independent.
//!
//! The matching C header is generated into `include/fieldscout.h` at build
//! time.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use fieldscout::cli::config::ExperimentConfig;
use fieldscout::cli::CliError;
use fieldscout::field::{
    generate_field, read_raster, write_raster, LabelGrid, RasterEncoding, RasterError,
};
use fieldscout::metrics;
use fieldscout::planner::{self, DecisionAction, DecisionState, PlannerError};
use fieldscout::sim::{self, Strategy};

/// Result of every call in this interface.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FsStatus {
    /// The call succeeded and all out-parameters are valid.
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// An input was rejected: failed validation, unparseable content, or an
    /// unknown name.
    InvalidArgument = 3,
    /// A filesystem read or write failed.
    IoError = 4,
    /// The library panicked. No memory was leaked from the call, but any
    /// out-parameter content is unspecified.
    Panic = 5,
}

/// Opaque experiment configuration: camera, altitude ladder, oracle, time
/// model, field specs, and decision settings.
pub struct FsConfig(ExperimentConfig);

/// Opaque labeled field raster.
pub struct FsField(LabelGrid);

/// Opaque decision state: the two fitted GPs plus activity thresholds.
pub struct FsState(DecisionState);

/// Summary of a field raster.
#[repr(C)]
pub struct FsFieldInfo {
    /// Grid width in cells.
    pub width: usize,
    /// Grid height in cells.
    pub height: usize,
    /// Meters per cell.
    pub resolution_m_per_px: f64,
    /// World x of the south-west corner, meters.
    pub origin_x: f64,
    /// World y of the south-west corner, meters.
    pub origin_y: f64,
    /// Fraction of cells labeled crop or weed, in [0, 1].
    pub vegetation_ratio: f64,
}

/// Action chosen for one survey image.
#[repr(C)]
pub struct FsDecision {
    /// True when the planner wants a descent, false to continue the sweep.
    pub descend: bool,
    /// Target GSD of the descent in m/px; NaN when `descend` is false.
    pub target_gsd: f64,
    /// Predicted mIoU gain behind the choice (0 below the activity range).
    pub predicted_gain: f64,
}

/// Aggregate outcome of one mission.
#[repr(C)]
pub struct FsRunStats {
    /// Field-level mIoU of the fused map, or NaN when no ground truth was
    /// supplied.
    pub field_miou: f64,
    /// Mission duration in seconds.
    pub total_time_s: f64,
    /// Number of images captured.
    pub n_images: usize,
    /// Number of descents flown.
    pub n_descents: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn fail(status: FsStatus, message: impl std::fmt::Display) -> FsStatus {
    let text = message.to_string().replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(text).expect("NUL bytes were stripped");
    });
    status
}

fn guard(body: impl FnOnce() -> FsStatus) -> FsStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(payload) => {
            let what = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".to_string());
            fail(FsStatus::Panic, format!("internal panic: {what}"))
        }
    }
}

fn cli_message(e: CliError) -> String {
    match e {
        CliError::Usage(m) | CliError::Data(m) => m,
    }
}

fn raster_status(e: &RasterError) -> FsStatus {
    match e {
        RasterError::Io(_) => FsStatus::IoError,
        _ => FsStatus::InvalidArgument,
    }
}

fn planner_status(e: &PlannerError) -> FsStatus {
    match e {
        PlannerError::Io(_) => FsStatus::IoError,
        _ => FsStatus::InvalidArgument,
    }
}

/// Checks a handle or input pointer and borrows it, or returns NullPointer.
macro_rules! expect_ref {
    ($ptr:expr, $what:literal) => {
        match unsafe { $ptr.as_ref() } {
            Some(reference) => reference,
            None => return fail(FsStatus::NullPointer, concat!($what, " must not be null")),
        }
    };
}

/// Checks a C string argument and borrows it as UTF-8.
macro_rules! expect_str {
    ($ptr:expr, $what:literal) => {{
        if $ptr.is_null() {
            return fail(FsStatus::NullPointer, concat!($what, " must not be null"));
        }
        match unsafe { CStr::from_ptr($ptr) }.to_str() {
            Ok(text) => text,
            Err(_) => {
                return fail(FsStatus::InvalidUtf8, concat!($what, " is not valid UTF-8"))
            }
        }
    }};
}

/// Rejects a null out-parameter.
macro_rules! expect_out {
    ($ptr:expr, $what:literal) => {
        if $ptr.is_null() {
            return fail(FsStatus::NullPointer, concat!($what, " must not be null"));
        }
    };
}

/// Returns the library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Returns the description of the most recent failure on the calling
/// thread, or an empty string when nothing has failed yet. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fs_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Loads and validates an experiment configuration from a TOML file.
///
/// # Safety
/// `path` must point to a NUL-terminated string and `out` to writable
/// storage for one pointer. On success `*out` must later be released with
/// [`fs_config_free`].
#[no_mangle]
pub unsafe extern "C" fn fs_config_load(
    path: *const c_char,
    out: *mut *mut FsConfig,
) -> FsStatus {
    guard(|| {
        expect_out!(out, "out");
        let path = expect_str!(path, "path");
        if let Err(e) = std::fs::metadata(path) {
            return fail(FsStatus::IoError, format!("cannot read {path}: {e}"));
        }
        match ExperimentConfig::load(Path::new(path)) {
            Ok(config) => {
                unsafe { *out = Box::into_raw(Box::new(FsConfig(config))) };
                FsStatus::Ok
            }
            Err(e) => fail(FsStatus::InvalidArgument, cli_message(e)),
        }
    })
}

/// Releases a configuration handle. Null is ignored.
///
/// # Safety
/// `config` must be a handle from [`fs_config_load`] that has not been
/// freed, or null.
#[no_mangle]
pub unsafe extern "C" fn fs_config_free(config: *mut FsConfig) {
    if !config.is_null() {
        drop(unsafe { Box::from_raw(config) });
    }
}

/// Generates the field named `name` in the configuration's field list.
///
/// # Safety
/// `config` must be a live configuration handle, `name` a NUL-terminated
/// string, and `out` writable storage for one pointer. On success `*out`
/// must later be released with [`fs_field_free`].
#[no_mangle]
pub unsafe extern "C" fn fs_field_generate(
    config: *const FsConfig,
    name: *const c_char,
    out: *mut *mut FsField,
) -> FsStatus {
    guard(|| {
        expect_out!(out, "out");
        let config = expect_ref!(config, "config");
        let name = expect_str!(name, "name");
        let spec = match config.0.field_spec(name) {
            Ok(spec) => spec,
            Err(e) => return fail(FsStatus::InvalidArgument, cli_message(e)),
        };
        match generate_field(spec) {
            Ok(grid) => {
                unsafe { *out = Box::into_raw(Box::new(FsField(grid))) };
                FsStatus::Ok
            }
            Err(e) => fail(FsStatus::InvalidArgument, e),
        }
    })
}

/// Loads a field raster from a PGM file.
///
/// # Safety
/// `path` must point to a NUL-terminated string and `out` to writable
/// storage for one pointer. On success `*out` must later be released with
/// [`fs_field_free`].
#[no_mangle]
pub unsafe extern "C" fn fs_field_load(
    path: *const c_char,
    out: *mut *mut FsField,
) -> FsStatus {
    guard(|| {
        expect_out!(out, "out");
        let path = expect_str!(path, "path");
        match read_raster(path) {
            Ok(grid) => {
                unsafe { *out = Box::into_raw(Box::new(FsField(grid))) };
                FsStatus::Ok
            }
            Err(e) => fail(raster_status(&e), e),
        }
    })
}

/// Writes a field raster to `path` as binary PGM.
///
/// # Safety
/// `field` must be a live field handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fs_field_save(
    field: *const FsField,
    path: *const c_char,
) -> FsStatus {
    guard(|| {
        let field = expect_ref!(field, "field");
        let path = expect_str!(path, "path");
        match write_raster(&field.0, path, RasterEncoding::Binary) {
            Ok(()) => FsStatus::Ok,
            Err(e) => fail(raster_status(&e), e),
        }
    })
}

/// Fills `out` with the dimensions and vegetation ratio of a field.
///
/// # Safety
/// `field` must be a live field handle and `out` writable storage for one
/// [`FsFieldInfo`].
#[no_mangle]
pub unsafe extern "C" fn fs_field_info(
    field: *const FsField,
    out: *mut FsFieldInfo,
) -> FsStatus {
    guard(|| {
        expect_out!(out, "out");
        let field = expect_ref!(field, "field");
        let grid = &field.0;
        let (origin_x, origin_y) = grid.origin();
        unsafe {
            *out = FsFieldInfo {
                width: grid.width(),
                height: grid.height(),
                resolution_m_per_px: grid.resolution(),
                origin_x,
                origin_y,
                vegetation_ratio: metrics::vegetation_ratio(grid),
            };
        }
        FsStatus::Ok
    })
}

/// Scores `pred` against `gt` and writes the mean IoU over the classes
/// present. The grids must have identical shape, resolution, and origin.
///
/// # Safety
/// `pred` and `gt` must be live field handles and `out` writable storage
/// for one double.
#[no_mangle]
pub unsafe extern "C" fn fs_field_miou(
    pred: *const FsField,
    gt: *const FsField,
    out: *mut f64,
) -> FsStatus {
    guard(|| {
        expect_out!(out, "out");
        let pred = expect_ref!(pred, "pred");
        let gt = expect_ref!(gt, "gt");
        match metrics::miou(&pred.0, &gt.0) {
            Ok(stats) => {
                unsafe { *out = stats.miou };
                FsStatus::Ok
            }
            Err(e) => fail(FsStatus::InvalidArgument, e),
        }
    })
}

/// Releases a field handle. Null is ignored.
///
/// # Safety
/// `field` must be an unfreed handle from this library, or null.
#[no_mangle]
pub unsafe extern "C" fn fs_field_free(field: *mut FsField) {
    if !field.is_null() {
        drop(unsafe { Box::from_raw(field) });
    }
}

/// Runs the training flight over `training` (which must have at least four
/// survey regions and some vegetation) and freezes the resulting decision
/// state, with any threshold overrides from the configuration applied.
///
/// # Safety
/// `config` and `training` must be live handles and `out` writable storage
/// for one pointer. On success `*out` must later be released with
/// [`fs_state_free`].
#[no_mangle]
pub unsafe extern "C" fn fs_state_init(
    config: *const FsConfig,
    training: *const FsField,
    out: *mut *mut FsState,
) -> FsStatus {
    guard(|| {
        expect_out!(out, "out");
        let config = expect_ref!(config, "config");
        let training = expect_ref!(training, "training");
        let config = &config.0;
        let built = planner::initialize(
            &training.0,
            &config.camera,
            &config.ladder,
            &config.oracle,
            &config.decision.init_params(),
        )
        .and_then(|state| config.decision.apply_overrides(state));
        match built {
            Ok(state) => {
                unsafe { *out = Box::into_raw(Box::new(FsState(state))) };
                FsStatus::Ok
            }
            Err(e) => fail(planner_status(&e), e),
        }
    })
}

/// Writes a decision state to `path` as TOML.
///
/// # Safety
/// `state` must be a live state handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fs_state_save(
    state: *const FsState,
    path: *const c_char,
) -> FsStatus {
    guard(|| {
        let state = expect_ref!(state, "state");
        let path = expect_str!(path, "path");
        match state.0.save(path) {
            Ok(()) => FsStatus::Ok,
            Err(e) => fail(planner_status(&e), e),
        }
    })
}

/// Loads a decision state from a TOML file and refits its GPs.
///
/// # Safety
/// `path` must point to a NUL-terminated string and `out` to writable
/// storage for one pointer. On success `*out` must later be released with
/// [`fs_state_free`].
#[no_mangle]
pub unsafe extern "C" fn fs_state_load(
    path: *const c_char,
    out: *mut *mut FsState,
) -> FsStatus {
    guard(|| {
        expect_out!(out, "out");
        let path = expect_str!(path, "path");
        match DecisionState::load(path) {
            Ok(state) => {
                unsafe { *out = Box::into_raw(Box::new(FsState(state))) };
                FsStatus::Ok
            }
            Err(e) => fail(planner_status(&e), e),
        }
    })
}

/// Writes the activity thresholds of a decision state: ratios below
/// `v_lo` always continue, ratios at or above `v_hi` descend to the finest
/// rung whenever a positive gain is predicted.
///
/// # Safety
/// `state` must be a live state handle; `v_lo` and `v_hi` must each point
/// to writable storage for one double.
#[no_mangle]
pub unsafe extern "C" fn fs_state_thresholds(
    state: *const FsState,
    v_lo: *mut f64,
    v_hi: *mut f64,
) -> FsStatus {
    guard(|| {
        expect_out!(v_lo, "v_lo");
        expect_out!(v_hi, "v_hi");
        let state = expect_ref!(state, "state");
        unsafe {
            *v_lo = state.0.v_lo();
            *v_hi = state.0.v_hi();
        }
        FsStatus::Ok
    })
}

/// Evaluates the decision function for one survey image whose vegetation
/// ratio is `v`.
///
/// # Safety
/// `state` must be a live state handle and `out` writable storage for one
/// [`FsDecision`].
#[no_mangle]
pub unsafe extern "C" fn fs_state_decide(
    state: *const FsState,
    v: f64,
    out: *mut FsDecision,
) -> FsStatus {
    guard(|| {
        expect_out!(out, "out");
        let state = expect_ref!(state, "state");
        if !v.is_finite() {
            return fail(FsStatus::InvalidArgument, "v must be finite");
        }
        let decision = planner::decide(&state.0, v);
        let (descend, target_gsd) = match decision.action {
            DecisionAction::Continue => (false, f64::NAN),
            DecisionAction::Descend { target_gsd } => (true, target_gsd),
        };
        unsafe {
            *out = FsDecision { descend, target_gsd, predicted_gain: decision.predicted_gain };
        }
        FsStatus::Ok
    })
}

/// Releases a state handle. Null is ignored.
///
/// # Safety
/// `state` must be an unfreed handle from this library, or null.
#[no_mangle]
pub unsafe extern "C" fn fs_state_free(state: *mut FsState) {
    if !state.is_null() {
        drop(unsafe { Box::from_raw(state) });
    }
}

/// Flies one mission over `field` and fills `out` with the aggregate
/// outcome.
///
/// `strategy` accepts the same labels as the CLI: "fixed:<cm>",
/// "non_adaptive", "linear", or "adaptive". `gt` may be null except for
/// fixed strategies, which need it for scoring; without it the reported
/// mIoU is NaN. `state` may be null for fixed strategies and is required
/// for the other three. When `trace_path` is non-null the full event log is
/// written there as JSON lines.
///
/// # Safety
/// `config`, `field`, and non-null `gt`/`state` must be live handles;
/// `strategy` and non-null `trace_path` must be NUL-terminated strings;
/// `out` must be writable storage for one [`FsRunStats`].
#[no_mangle]
pub unsafe extern "C" fn fs_mission_run(
    config: *const FsConfig,
    field: *const FsField,
    gt: *const FsField,
    state: *const FsState,
    strategy: *const c_char,
    seed: u64,
    trace_path: *const c_char,
    out: *mut FsRunStats,
) -> FsStatus {
    guard(|| {
        expect_out!(out, "out");
        let config = expect_ref!(config, "config");
        let field = expect_ref!(field, "field");
        let strategy = expect_str!(strategy, "strategy");
        let strategy: Strategy = match strategy.parse() {
            Ok(s) => s,
            Err(e) => return fail(FsStatus::InvalidArgument, e),
        };
        let gt = unsafe { gt.as_ref() }.map(|f| &f.0);
        let state = unsafe { state.as_ref() }.map(|s| &s.0);
        let config = &config.0;
        let trace = match sim::run_mission(
            &field.0,
            gt,
            &config.camera,
            &config.ladder,
            &config.oracle,
            &config.time,
            &strategy,
            state,
            seed,
        ) {
            Ok(trace) => trace,
            Err(e) => return fail(FsStatus::InvalidArgument, e),
        };
        if !trace_path.is_null() {
            let trace_path = expect_str!(trace_path, "trace_path");
            if let Err(e) = std::fs::write(trace_path, trace.to_jsonl()) {
                return fail(FsStatus::IoError, format!("cannot write {trace_path}: {e}"));
            }
        }
        unsafe {
            *out = FsRunStats {
                field_miou: trace.field_stats.as_ref().map_or(f64::NAN, |s| s.miou),
                total_time_s: trace.total_time_s,
                n_images: trace.n_images(),
                n_descents: trace.n_descents(),
            };
        }
        FsStatus::Ok
    })
}
