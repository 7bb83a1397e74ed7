//! C ABI over the `roadmark` pipeline.
//!
//! Objects cross the boundary as opaque handles written through an `out`
//! pointer and released with the matching `rm_*_free`. Every fallible
//! call returns an [`RmStatus`]; on failure a description is available from
//! [`rm_last_error`] on the same thread until the next failing call.
//! Panics are caught at the boundary and reported as `RM_STATUS_PANIC`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use roadmark::config::PipelineConfig;
use roadmark::metrics::evaluate;
use roadmark::pipeline::{run_frame, FrameResult};
use roadmark::synth::{scene_frame, Profile};
use roadmark::threshold::Channel;
use roadmark::{Error, Label, LidarPoint, PointCloud};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RmStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// An index or buffer length is out of range.
    OutOfRange = 3,
    Usage = 10,
    Config = 11,
    Structural = 20,
    Schema = 21,
    Corrupt = 22,
    Io = 23,
    Degenerate = 24,
    Panic = 99,
}

/// Point label codes used in label buffers.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RmLabel {
    Road = 0,
    Marking = 1,
    Other = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RmChannel {
    Reflectivity = 0,
    Intensity = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RmProfile {
    TestTrack = 0,
    Highway = 1,
}

/// One return. Clouds are row-major by ring, then column.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub range: f64,
    pub intensity: f32,
    pub reflectivity: u16,
    pub ring: u16,
    pub col: u16,
    pub valid: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmLine {
    pub anchor: [f64; 3],
    pub direction: [f64; 3],
    pub support: u64,
    pub accepted: bool,
}

/// Stage durations in milliseconds.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RmTimings {
    pub prefilter_ms: f64,
    pub plane_ms: f64,
    pub region_ms: f64,
    pub threshold_ms: f64,
    pub lines_ms: f64,
    pub total_ms: f64,
}

/// Point-level scores; an undefined ratio is NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmScore {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Opaque point cloud.
pub struct RmCloud(PointCloud);

/// Opaque pipeline configuration.
pub struct RmConfig(PipelineConfig);

/// Opaque output of one pipeline run.
pub struct RmFrameResult(FrameResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> RmStatus {
    match e {
        Error::Structural(_) => RmStatus::Structural,
        Error::Schema { .. } => RmStatus::Schema,
        Error::Corrupt { .. } => RmStatus::Corrupt,
        Error::Io { .. } => RmStatus::Io,
        Error::Degenerate(_) => RmStatus::Degenerate,
        Error::Config(_) => RmStatus::Config,
        Error::Usage(_) => RmStatus::Usage,
        Error::Stage { source, .. } => status_of(source),
    }
}

struct Fail(RmStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(RmStatus::NullArgument, format!("`{what}` is null"))
}

/// Runs `body`, converting errors and panics into a status.
fn guard(body: impl FnOnce() -> Result<(), Fail>) -> RmStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => RmStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            RmStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(s: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| Fail(RmStatus::InvalidUtf8, format!("`{what}` is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

fn label_code(l: Label) -> u8 {
    match l {
        Label::Road => RmLabel::Road as u8,
        Label::Marking => RmLabel::Marking as u8,
        Label::Other => RmLabel::Other as u8,
    }
}

fn label_from_code(c: u8) -> Result<Label, Fail> {
    match c {
        0 => Ok(Label::Road),
        1 => Ok(Label::Marking),
        2 => Ok(Label::Other),
        _ => Err(Fail(RmStatus::OutOfRange, format!("unknown label code {c}"))),
    }
}

unsafe fn label_slice<'a>(p: *const u8, len: usize, what: &str) -> Result<&'a [u8], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_labels(labels: &[Label], out: *mut u8, out_len: usize) -> Result<(), Fail> {
    if out_len < labels.len() {
        return Err(Fail(
            RmStatus::OutOfRange,
            format!("label buffer holds {out_len}, need {}", labels.len()),
        ));
    }
    if labels.is_empty() {
        return Ok(());
    }
    if out.is_null() {
        return Err(null("out"));
    }
    let dst = std::slice::from_raw_parts_mut(out, labels.len());
    for (d, l) in dst.iter_mut().zip(labels) {
        *d = label_code(*l);
    }
    Ok(())
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

// Clouds

/// Reads a cloud file in text or binary layout.
#[no_mangle]
pub unsafe extern "C" fn rm_cloud_read(path: *const c_char, out: *mut *mut RmCloud) -> RmStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        put(out, RmCloud(roadmark::io::read_cloud(path)?), "out")
    })
}

/// Builds a cloud from points in strictly increasing `(ring, col)` order.
/// Missing slots are allowed.
#[no_mangle]
pub unsafe extern "C" fn rm_cloud_from_points(
    n_layers: u16,
    n_cols: u16,
    points: *const RmPoint,
    len: usize,
    out: *mut *mut RmCloud,
) -> RmStatus {
    guard(|| {
        let src: &[RmPoint] = if len == 0 {
            &[]
        } else if points.is_null() {
            return Err(null("points"));
        } else {
            std::slice::from_raw_parts(points, len)
        };
        let pts = src
            .iter()
            .map(|p| LidarPoint {
                x: p.x,
                y: p.y,
                z: p.z,
                range: p.range,
                intensity: p.intensity,
                reflectivity: p.reflectivity,
                ring: p.ring,
                col: p.col,
                valid: p.valid,
            })
            .collect();
        put(out, RmCloud(PointCloud::new(n_layers, n_cols, "ffi", pts)?), "out")
    })
}

/// Generates frame `index` of a synthetic suite. When `truth` is non-null
/// it receives one label code per point and must hold `truth_len` bytes.
#[no_mangle]
pub unsafe extern "C" fn rm_scene_frame(
    profile: RmProfile,
    seed: u64,
    index: usize,
    out: *mut *mut RmCloud,
    truth: *mut u8,
    truth_len: usize,
) -> RmStatus {
    guard(|| {
        let p = match profile {
            RmProfile::TestTrack => Profile::TestTrack,
            RmProfile::Highway => Profile::Highway,
        };
        let f = scene_frame(p, seed, index)?;
        if !truth.is_null() {
            write_labels(&f.truth.labels, truth, truth_len)?;
        }
        put(out, RmCloud(f.cloud), "out")
    })
}

/// Number of point slots, dropouts included. Zero for a null handle.
#[no_mangle]
pub unsafe extern "C" fn rm_cloud_len(cloud: *const RmCloud) -> usize {
    cloud.as_ref().map_or(0, |c| c.0.len())
}

/// Copies point `index` into `out`.
#[no_mangle]
pub unsafe extern "C" fn rm_cloud_point(cloud: *const RmCloud, index: usize, out: *mut RmPoint) -> RmStatus {
    guard(|| {
        let c = ref_arg(cloud, "cloud")?;
        let p =
            c.0.points()
                .get(index)
                .ok_or_else(|| Fail(RmStatus::OutOfRange, format!("point {index} of {}", c.0.len())))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = RmPoint {
            x: p.x,
            y: p.y,
            z: p.z,
            range: p.range,
            intensity: p.intensity,
            reflectivity: p.reflectivity,
            ring: p.ring,
            col: p.col,
            valid: p.valid,
        };
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn rm_cloud_free(cloud: *mut RmCloud) {
    free(cloud)
}

// Configuration

/// Configuration holding the default parameters.
#[no_mangle]
pub unsafe extern "C" fn rm_config_default(out: *mut *mut RmConfig) -> RmStatus {
    guard(|| put(out, RmConfig(PipelineConfig::default()), "out"))
}

/// Parses a configuration from TOML text. Unknown keys are rejected.
#[no_mangle]
pub unsafe extern "C" fn rm_config_from_toml(text: *const c_char, out: *mut *mut RmConfig) -> RmStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        put(out, RmConfig(PipelineConfig::from_toml_str(text)?), "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn rm_config_set_seed(config: *mut RmConfig, seed: u64) -> RmStatus {
    guard(|| {
        let c = config.as_mut().ok_or_else(|| null("config"))?;
        c.0 = c.0.clone().with_seed(seed);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn rm_config_set_channel(config: *mut RmConfig, channel: RmChannel) -> RmStatus {
    guard(|| {
        let c = config.as_mut().ok_or_else(|| null("config"))?;
        c.0.threshold.channel = match channel {
            RmChannel::Reflectivity => Channel::Reflectivity,
            RmChannel::Intensity => Channel::Intensity,
        };
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn rm_config_free(config: *mut RmConfig) {
    free(config)
}

// Pipeline

/// Runs the full pipeline on one cloud.
#[no_mangle]
pub unsafe extern "C" fn rm_run_frame(
    cloud: *const RmCloud,
    config: *const RmConfig,
    out: *mut *mut RmFrameResult,
) -> RmStatus {
    guard(|| {
        let cloud = ref_arg(cloud, "cloud")?;
        let config = ref_arg(config, "config")?;
        put(out, RmFrameResult(run_frame(&cloud.0, &config.0)?), "out")
    })
}

/// Number of labels the result holds, equal to the input cloud length.
#[no_mangle]
pub unsafe extern "C" fn rm_result_len(result: *const RmFrameResult) -> usize {
    result.as_ref().map_or(0, |r| r.0.labels.len())
}

/// Writes one label code per point into `out`, which must hold `out_len`
/// bytes with `out_len >= rm_result_len(result)`.
#[no_mangle]
pub unsafe extern "C" fn rm_result_labels(result: *const RmFrameResult, out: *mut u8, out_len: usize) -> RmStatus {
    guard(|| write_labels(&ref_arg(result, "result")?.0.labels, out, out_len))
}

/// Number of points that passed the threshold stage.
#[no_mangle]
pub unsafe extern "C" fn rm_result_candidate_count(result: *const RmFrameResult) -> usize {
    result.as_ref().map_or(0, |r| r.0.candidates.len())
}

/// Number of fitted lines, accepted or not.
#[no_mangle]
pub unsafe extern "C" fn rm_result_line_count(result: *const RmFrameResult) -> usize {
    result.as_ref().map_or(0, |r| r.0.lines.len())
}

#[no_mangle]
pub unsafe extern "C" fn rm_result_line(result: *const RmFrameResult, index: usize, out: *mut RmLine) -> RmStatus {
    guard(|| {
        let r = ref_arg(result, "result")?;
        let l =
            r.0.lines
                .get(index)
                .ok_or_else(|| Fail(RmStatus::OutOfRange, format!("line {index} of {}", r.0.lines.len())))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = RmLine {
            anchor: l.anchor,
            direction: l.direction,
            support: l.support.len() as u64,
            accepted: l.accepted,
        };
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn rm_result_timings(result: *const RmFrameResult, out: *mut RmTimings) -> RmStatus {
    guard(|| {
        let t = &ref_arg(result, "result")?.0.timings;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = RmTimings {
            prefilter_ms: t.prefilter_ms,
            plane_ms: t.plane_ms,
            region_ms: t.region_ms,
            threshold_ms: t.threshold_ms,
            lines_ms: t.lines_ms,
            total_ms: t.total_ms,
        };
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn rm_result_free(result: *mut RmFrameResult) {
    free(result)
}

// Metrics

/// Scores two label-code buffers of equal length `len`.
#[no_mangle]
pub unsafe extern "C" fn rm_evaluate(
    predicted: *const u8,
    truth: *const u8,
    len: usize,
    out: *mut RmScore,
) -> RmStatus {
    guard(|| {
        let decode = |s: &[u8]| s.iter().map(|&c| label_from_code(c)).collect::<Result<Vec<_>, _>>();
        let p = decode(label_slice(predicted, len, "predicted")?)?;
        let t = decode(label_slice(truth, len, "truth")?)?;
        let r = evaluate(&p, &t)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = RmScore {
            tp: r.tp,
            fp: r.fp,
            fn_: r.fn_,
            precision: r.precision.unwrap_or(f64::NAN),
            recall: r.recall.unwrap_or(f64::NAN),
            f1: r.f1.unwrap_or(f64::NAN),
        };
        Ok(())
    })
}
