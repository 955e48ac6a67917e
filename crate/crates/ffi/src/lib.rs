//! C ABI over the `gazetrack` library.
//!
//! Every function returns a [`GtStatus`]; on failure a message is kept per
//! thread and can be read with [`gt_last_error_message`]. Handles are
//! opaque and owned by the caller until passed to their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};

use gazetrack::geometry::{natural_rotation_bounds, HeadPose, ScreenGeometry};
use gazetrack::isocenter::{locate_eye_center, Roi};
use gazetrack::imgproc::GrayImage;
use gazetrack::models::{CalibrationSample, CalibrationSet, Eye, GazeVector, MappingModel, ModelSpec, ScreenPoint};
use gazetrack::pipeline::{FrameInput, Tracker, TrackerConfig, TrackerKind};
use gazetrack::Error;

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    DegenerateDesign = 3,
    UndefinedDisparity = 4,
    Lost = 5,
    NoIntersection = 6,
    LineInPlane = 7,
    Construction = 8,
    Io = 9,
    Panic = 10,
}

/// Screen size in pixels and millimetres.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct GtScreen {
    pub width_px: f64,
    pub height_px: f64,
    pub width_mm: f64,
    pub height_mm: f64,
}

/// Head pose: rotation angles in radians, translation in millimetres.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct GtPose {
    pub wx: f64,
    pub wy: f64,
    pub wz: f64,
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
}

/// One calibration point: grid index 1..=25, gaze vector and screen target.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct GtSample {
    pub index: u32,
    pub vx: f64,
    pub vy: f64,
    pub sx: f64,
    pub sy: f64,
}

/// Per-frame tracker output.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct GtEstimate {
    pub sx: f64,
    pub sy: f64,
    pub recalibrated: bool,
    pub fallback: bool,
}

/// Fitted gaze-to-screen mapping.
pub struct GtModel(MappingModel);

/// Single-eye tracker with its calibration.
pub struct GtTracker(Tracker);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> GtStatus {
    match e {
        Error::InvalidInput(_) => GtStatus::InvalidInput,
        Error::DegenerateDesign(_) => GtStatus::DegenerateDesign,
        Error::UndefinedDisparity => GtStatus::UndefinedDisparity,
        Error::Lost(_) => GtStatus::Lost,
        Error::NoIntersection => GtStatus::NoIntersection,
        Error::LineInPlane => GtStatus::LineInPlane,
        Error::Construction { .. } => GtStatus::Construction,
        _ => GtStatus::Io,
    }
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

/// Runs `f`, recording any error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> GtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            GtStatus::Ok
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            GtStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            GtStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, what: &'static str) -> Result<*const T, Failure> {
    if p.is_null() {
        Err(Failure::Null(what))
    } else {
        Ok(p)
    }
}

unsafe fn parse_str<T: std::str::FromStr<Err = Error>>(p: *const c_char, what: &'static str) -> Result<T, Failure> {
    let s = CStr::from_ptr(non_null(p, what)?)
        .to_str()
        .map_err(|_| Error::InvalidInput(format!("{what} is not UTF-8")))?;
    Ok(s.parse()?)
}

fn screen_of(s: &GtScreen) -> Result<ScreenGeometry, Failure> {
    Ok(ScreenGeometry::new(s.width_px, s.height_px, s.width_mm, s.height_mm)?)
}

fn pose_of(p: &GtPose) -> Result<HeadPose, Failure> {
    Ok(HeadPose::new(p.wx, p.wy, p.wz, p.tx, p.ty, p.tz)?)
}

unsafe fn calibration_of(screen: &GtScreen, samples: *const GtSample, count: usize) -> Result<CalibrationSet, Failure> {
    let samples = std::slice::from_raw_parts(non_null(samples, "samples")?, count);
    let samples = samples
        .iter()
        .map(|s| CalibrationSample {
            index: s.index,
            vector: GazeVector::new(s.vx, s.vy, Eye::Left),
            target: ScreenPoint::new(s.sx, s.sy),
        })
        .collect();
    Ok(CalibrationSet::new(samples, screen_of(screen)?)?)
}

/// Copies the calling thread's last error message into `buf` as a
/// NUL-terminated string, truncating to `len - 1` bytes. Returns the full
/// message length in bytes, excluding the terminator. `buf` may be null to
/// query the length.
///
/// # Safety
/// `buf` must be null or point to at least `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn gt_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Fits a mapping model (`"quadratic25"`, `"linear5"`, ...) to `count`
/// calibration samples and stores a new handle in `out`.
///
/// # Safety
/// `model` must be a NUL-terminated string, `samples` must point to `count`
/// samples and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gt_model_fit(
    model: *const c_char,
    screen: GtScreen,
    samples: *const GtSample,
    count: usize,
    out: *mut *mut GtModel,
) -> GtStatus {
    guard(|| {
        non_null(out, "out")?;
        let spec: ModelSpec = parse_str(model, "model")?;
        let fitted = spec.fit(&calibration_of(&screen, samples, count)?)?;
        *out = Box::into_raw(Box::new(GtModel(fitted)));
        Ok(())
    })
}

/// Maps a gaze vector to screen pixels.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gt_model_predict(model: *const GtModel, vx: f64, vy: f64, out: *mut GtEstimate) -> GtStatus {
    guard(|| {
        let m = &*non_null(model, "model")?;
        non_null(out, "out")?;
        let p = m.0.predict(&GazeVector::new(vx, vy, Eye::Left));
        *out = GtEstimate {
            sx: p.sx,
            sy: p.sy,
            ..GtEstimate::default()
        };
        Ok(())
    })
}

/// Releases a model handle. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle from [`gt_model_fit`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gt_model_free(model: *mut GtModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Creates a tracker of the given kind (`"2d"`, `"2.5d"`, `"3d"`).
/// `calibration_pose` may be null for the default pose.
///
/// # Safety
/// String arguments must be NUL-terminated, `samples` must point to `count`
/// samples, `calibration_pose` must be null or valid, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gt_tracker_new(
    kind: *const c_char,
    model: *const c_char,
    screen: GtScreen,
    samples: *const GtSample,
    count: usize,
    calibration_pose: *const GtPose,
    out: *mut *mut GtTracker,
) -> GtStatus {
    guard(|| {
        non_null(out, "out")?;
        let kind: TrackerKind = parse_str(kind, "kind")?;
        let spec: ModelSpec = parse_str(model, "model")?;
        let mut config = TrackerConfig::new(kind, spec);
        if !calibration_pose.is_null() {
            config.calibration_pose = pose_of(&*calibration_pose)?;
        }
        let tracker = Tracker::new(config, vec![calibration_of(&screen, samples, count)?])?;
        *out = Box::into_raw(Box::new(GtTracker(tracker)));
        Ok(())
    })
}

/// Estimates the point of gaze for one frame. `pose` may be null for the
/// 2D tracker and is required otherwise.
///
/// # Safety
/// `tracker` must be a live handle, `pose` null or valid, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gt_tracker_process(
    tracker: *mut GtTracker,
    frame: u64,
    vx: f64,
    vy: f64,
    pose: *const GtPose,
    out: *mut GtEstimate,
) -> GtStatus {
    guard(|| {
        let t = &mut *non_null(tracker, "tracker")?.cast_mut();
        non_null(out, "out")?;
        let pose = if pose.is_null() { None } else { Some(pose_of(&*pose)?) };
        let input = FrameInput::vectors(frame, vec![GazeVector::new(vx, vy, Eye::Left)], pose);
        let e = t.0.process(&input)?;
        *out = GtEstimate {
            sx: e.point.sx,
            sy: e.point.sy,
            recalibrated: e.recalibrated,
            fallback: e.fallback,
        };
        Ok(())
    })
}

/// Number of frames on which the tracker refitted its model.
///
/// # Safety
/// `tracker` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gt_tracker_refit_count(tracker: *const GtTracker, out: *mut usize) -> GtStatus {
    guard(|| {
        let t = &*non_null(tracker, "tracker")?;
        non_null(out, "out")?;
        *out = t.0.refit_count();
        Ok(())
    })
}

/// Releases a tracker handle. Null is ignored.
///
/// # Safety
/// `tracker` must be null or a handle from [`gt_tracker_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gt_tracker_free(tracker: *mut GtTracker) {
    if !tracker.is_null() {
        drop(Box::from_raw(tracker));
    }
}

/// Locates the pupil centre in a row-major grey image with values in
/// `[0, 1]`. The result is in image pixel coordinates.
///
/// # Safety
/// `pixels` must point to `width * height` values; `out_x`, `out_y` writable.
#[no_mangle]
pub unsafe extern "C" fn gt_locate_eye_center(
    pixels: *const f64,
    width: usize,
    height: usize,
    out_x: *mut f64,
    out_y: *mut f64,
) -> GtStatus {
    guard(|| {
        non_null(out_x, "out_x")?;
        non_null(out_y, "out_y")?;
        let n = width
            .checked_mul(height)
            .ok_or_else(|| Error::InvalidInput("image size overflows".into()))?;
        let data = std::slice::from_raw_parts(non_null(pixels, "pixels")?, n).to_vec();
        let img = GrayImage::new(width, height, data)?;
        let c = locate_eye_center(&img, Roi::whole(&img))?;
        *out_x = c.x;
        *out_y = c.y;
        Ok(())
    })
}

/// Head rotation in degrees (horizontal, vertical) that sweeps the line of
/// sight from the screen centre to its edge at `depth_mm`.
///
/// # Safety
/// `out_alpha` and `out_beta` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gt_natural_rotation_bounds(
    screen: GtScreen,
    depth_mm: f64,
    out_alpha: *mut f64,
    out_beta: *mut f64,
) -> GtStatus {
    guard(|| {
        non_null(out_alpha, "out_alpha")?;
        non_null(out_beta, "out_beta")?;
        if !(depth_mm > 0.0 && depth_mm.is_finite()) {
            return Err(Error::InvalidInput(format!("depth must be positive, got {depth_mm}")).into());
        }
        let (a, b) = natural_rotation_bounds(&screen_of(&screen)?, depth_mm);
        *out_alpha = a;
        *out_beta = b;
        Ok(())
    })
}
