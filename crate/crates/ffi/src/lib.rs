//! C ABI for geosup.
//!
//! Every function returns a [`GeosupStatus`]; on failure a message is available from
//! [`geosup_last_error`] on the same thread. Handles are opaque and must be released with
//! their `_free` function. Arrays are row-major `double`; points are packed `x, y, z`
//! triples; rotations are 9 row-major entries.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use geosup::camera::{CameraIntrinsics, Point3};
use geosup::error::Error;
use geosup::gravity::{self, AccelPair, GravityVector, Rotation};
use geosup::grid::{DepthMap, Image};
use geosup::metrics::{self, CropMode, EvalOptions};
use geosup::refiner::{self, RefineInputs, RefinementConfig, Supervision, Termination};
use geosup::semantics::{CategoryMapping, SemanticMask};
use geosup::sigl::{self, VerticalSolver};
use nalgebra::Vector3;

/// Result of every call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GeosupStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    DimensionMismatch = 3,
    Degenerate = 4,
    NonFinite = 5,
    Config = 6,
    EmptyEvaluation = 7,
    /// File could not be read or written.
    Io = 8,
    /// File contents are malformed.
    Format = 9,
    Panic = 10,
}

/// Why a refinement stopped.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GeosupTermination {
    NoObjective = 0,
    MaxIterations = 1,
    Converged = 2,
    LineSearchStalled = 3,
}

/// Evaluation region.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GeosupCrop {
    Full = 0,
    Garg = 1,
}

/// Pinhole camera.
pub struct GeosupCamera {
    inner: CameraIntrinsics,
}

/// Refinement and geometric-loss settings.
pub struct GeosupConfig {
    inner: RefinementConfig,
}

/// Error and accuracy metrics over the valid pixels of one depth map.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GeosupMetrics {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    pub log10: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub valid: usize,
}

/// Geometric losses of a labeled depth map.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GeosupSiglTotals {
    pub hp: f64,
    pub vp: f64,
    pub total: f64,
    pub regions: usize,
    pub skipped_regions: usize,
}

/// Outcome of a refinement.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeosupRefineSummary {
    pub iterations: usize,
    pub termination: GeosupTermination,
    pub initial_total: f64,
    pub final_total: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> GeosupStatus {
    match err {
        Error::InvalidInput(_) | Error::BehindCamera(_) | Error::UnmappedClasses { .. } => GeosupStatus::InvalidInput,
        Error::DimensionMismatch(_) => GeosupStatus::DimensionMismatch,
        Error::Degenerate(_) => GeosupStatus::Degenerate,
        Error::NonFinite { .. } => GeosupStatus::NonFinite,
        Error::Config(_) => GeosupStatus::Config,
        Error::EmptyEvaluation(_) => GeosupStatus::EmptyEvaluation,
        Error::Format { .. } | Error::Parse { .. } => GeosupStatus::Format,
        Error::Io { .. } => GeosupStatus::Io,
    }
}

/// Failure carried to the boundary.
enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type Outcome = std::result::Result<(), Failure>;

fn invalid(message: impl Into<String>) -> Failure {
    Failure::Lib(Error::InvalidInput(message.into()))
}

fn guard(f: impl FnOnce() -> Outcome) -> GeosupStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            GeosupStatus::Ok
        }
        Ok(Err(Failure::Null(name))) => {
            set_last_error(format!("null pointer for '{name}'"));
            GeosupStatus::NullPointer
        }
        Ok(Err(Failure::Lib(err))) => {
            set_last_error(err.to_string());
            status_of(&err)
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("internal panic: {msg}"));
            GeosupStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, name: &'static str) -> std::result::Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, name: &'static str) -> std::result::Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn out<'a, T>(p: *mut T, name: &'static str) -> std::result::Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(name))
}

unsafe fn handle<'a, T>(p: *const T, name: &'static str) -> std::result::Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(name))
}

fn dims(width: usize, height: usize) -> std::result::Result<usize, Failure> {
    width
        .checked_mul(height)
        .ok_or_else(|| invalid(format!("image size {width}x{height} overflows")))
}

unsafe fn points(data: *const f64, count: usize) -> std::result::Result<Vec<Point3>, Failure> {
    let len = count.checked_mul(3).ok_or_else(|| invalid("point count overflows"))?;
    Ok(slice(data, len, "points")?
        .chunks_exact(3)
        .map(|c| Vector3::new(c[0], c[1], c[2]))
        .collect())
}

unsafe fn gravity_vector(g: *const f64) -> std::result::Result<GravityVector, Failure> {
    let g = slice(g, 3, "gravity")?;
    Ok(GravityVector::new(Vector3::new(g[0], g[1], g[2]))?)
}

unsafe fn rotation(r: *const f64, name: &'static str) -> std::result::Result<Rotation, Failure> {
    Ok(Rotation::from_row_slice(slice(r, 9, name)?)?)
}

fn write_rotation(r: &Rotation, dst: &mut [f64]) {
    dst.copy_from_slice(&r.to_row_vec());
}

/// Message of the last failed call on this thread, or null after a success. The pointer
/// stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn geosup_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static name of a status code.
#[no_mangle]
pub extern "C" fn geosup_status_name(status: GeosupStatus) -> *const c_char {
    let s: &'static CStr = match status {
        GeosupStatus::Ok => c"ok",
        GeosupStatus::NullPointer => c"null_pointer",
        GeosupStatus::InvalidInput => c"invalid_input",
        GeosupStatus::DimensionMismatch => c"dimension_mismatch",
        GeosupStatus::Degenerate => c"degenerate",
        GeosupStatus::NonFinite => c"non_finite",
        GeosupStatus::Config => c"config",
        GeosupStatus::EmptyEvaluation => c"empty_evaluation",
        GeosupStatus::Io => c"io",
        GeosupStatus::Format => c"format",
        GeosupStatus::Panic => c"panic",
    };
    s.as_ptr()
}

/// Library version string.
#[no_mangle]
pub extern "C" fn geosup_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a camera with focal lengths, principal point (pixel centers at integers) and
/// image size.
///
/// # Safety
/// `out_camera` must be a valid pointer to writable storage for a handle.
#[no_mangle]
pub unsafe extern "C" fn geosup_camera_new(
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: usize,
    height: usize,
    out_camera: *mut *mut GeosupCamera,
) -> GeosupStatus {
    guard(|| {
        let dst = out(out_camera, "out_camera")?;
        let inner = CameraIntrinsics::new(fx, fy, cx, cy, width, height)?;
        *dst = Box::into_raw(Box::new(GeosupCamera { inner }));
        Ok(())
    })
}

/// Releases a camera. Null is ignored.
///
/// # Safety
/// `camera` must come from [`geosup_camera_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn geosup_camera_free(camera: *mut GeosupCamera) {
    if !camera.is_null() {
        drop(Box::from_raw(camera));
    }
}

/// Creates a configuration with default weights and optimizer settings.
///
/// # Safety
/// `out_config` must be a valid pointer to writable storage for a handle.
#[no_mangle]
pub unsafe extern "C" fn geosup_config_new(out_config: *mut *mut GeosupConfig) -> GeosupStatus {
    guard(|| {
        let dst = out(out_config, "out_config")?;
        *dst = Box::into_raw(Box::new(GeosupConfig {
            inner: RefinementConfig::default(),
        }));
        Ok(())
    })
}

/// Loads a key-value configuration file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out_config` writable.
#[no_mangle]
pub unsafe extern "C" fn geosup_config_load(path: *const c_char, out_config: *mut *mut GeosupConfig) -> GeosupStatus {
    guard(|| {
        if path.is_null() {
            return Err(Failure::Null("path"));
        }
        let dst = out(out_config, "out_config")?;
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| invalid("path is not UTF-8"))?;
        let inner = RefinementConfig::from_file(Path::new(path))?;
        *dst = Box::into_raw(Box::new(GeosupConfig { inner }));
        Ok(())
    })
}

/// Releases a configuration. Null is ignored.
///
/// # Safety
/// `config` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn geosup_config_free(config: *mut GeosupConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

unsafe fn update_config(config: *mut GeosupConfig, f: impl FnOnce(&mut RefinementConfig)) -> GeosupStatus {
    guard(|| {
        let cfg = out(config, "config")?;
        let mut next = cfg.inner.clone();
        f(&mut next);
        next.validate()?;
        cfg.inner = next;
        Ok(())
    })
}

/// Sets the four term weights. Invalid values leave the configuration unchanged.
///
/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn geosup_config_set_weights(
    config: *mut GeosupConfig,
    photometric: f64,
    smoothness: f64,
    hp: f64,
    vp: f64,
) -> GeosupStatus {
    update_config(config, |c| {
        c.photometric_weight = photometric;
        c.smoothness_weight = smoothness;
        c.hp_weight = hp;
        c.vp_weight = vp;
    })
}

/// Sets the iteration budget and the initial step size.
///
/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn geosup_config_set_optimizer(
    config: *mut GeosupConfig,
    max_iterations: usize,
    learning_rate: f64,
) -> GeosupStatus {
    update_config(config, |c| {
        c.max_iterations = max_iterations;
        c.learning_rate = learning_rate;
    })
}

/// Number of sampled vertical directions; 0 selects the exact eigenvalue solver.
///
/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn geosup_config_set_directions(config: *mut GeosupConfig, directions: usize) -> GeosupStatus {
    update_config(config, |c| {
        c.vertical = if directions == 0 {
            VerticalSolver::Exact
        } else {
            VerticalSolver::Sampled(directions)
        };
    })
}

/// Horizontal-plane loss of `count` points.
///
/// # Safety
/// `points` holds `3 * count` doubles, `gravity` 3, `out_loss` is writable.
#[no_mangle]
pub unsafe extern "C" fn geosup_loss_hp(
    points_xyz: *const f64,
    count: usize,
    gravity: *const f64,
    out_loss: *mut f64,
) -> GeosupStatus {
    guard(|| {
        let dst = out(out_loss, "out_loss")?;
        *dst = sigl::loss_hp(&points(points_xyz, count)?, &gravity_vector(gravity)?)?;
        Ok(())
    })
}

/// Exact vertical-plane loss and, if `out_normal` is not null, the fitted unit normal.
///
/// # Safety
/// `points` holds `3 * count` doubles, `gravity` 3, `out_normal` null or 3 writable.
#[no_mangle]
pub unsafe extern "C" fn geosup_loss_vp_exact(
    points_xyz: *const f64,
    count: usize,
    gravity: *const f64,
    out_loss: *mut f64,
    out_normal: *mut f64,
) -> GeosupStatus {
    guard(|| {
        let dst = out(out_loss, "out_loss")?;
        let fit = sigl::loss_vp_exact(&points(points_xyz, count)?, &gravity_vector(gravity)?)?;
        *dst = fit.loss;
        if !out_normal.is_null() {
            slice_mut(out_normal, 3, "out_normal")?.copy_from_slice(fit.normal.as_slice());
        }
        Ok(())
    })
}

/// Vertical-plane loss minimized over `directions` evenly spaced directions.
///
/// # Safety
/// `points` holds `3 * count` doubles, `gravity` 3, `out_loss` is writable.
#[no_mangle]
pub unsafe extern "C" fn geosup_loss_vp_sampled(
    points_xyz: *const f64,
    count: usize,
    gravity: *const f64,
    directions: usize,
    out_loss: *mut f64,
) -> GeosupStatus {
    guard(|| {
        let dst = out(out_loss, "out_loss")?;
        *dst = sigl::loss_vp_sampled(&points(points_xyz, count)?, &gravity_vector(gravity)?, directions)?.loss;
        Ok(())
    })
}

/// Geometric losses of a depth map whose pixels carry CityScapes class ids.
///
/// # Safety
/// `depth` and `class_ids` hold `width * height` entries of the camera size.
#[no_mangle]
pub unsafe extern "C" fn geosup_sigl_total(
    camera: *const GeosupCamera,
    config: *const GeosupConfig,
    depth: *const f64,
    class_ids: *const u8,
    gravity: *const f64,
    out_totals: *mut GeosupSiglTotals,
) -> GeosupStatus {
    guard(|| {
        let cam = &handle(camera, "camera")?.inner;
        let cfg = &handle(config, "config")?.inner;
        let dst = out(out_totals, "out_totals")?;
        let (w, h) = (cam.width(), cam.height());
        let n = dims(w, h)?;
        let depth = DepthMap::from_vec(w, h, slice(depth, n, "depth")?.to_vec())?;
        let mask = SemanticMask::from_class_ids(
            w,
            h,
            slice(class_ids, n, "class_ids")?.to_vec(),
            &CategoryMapping::cityscapes(),
        )?;
        let report = sigl::sigl_total(&depth, cam, &gravity_vector(gravity)?, &mask, &cfg.sigl())?;
        *dst = GeosupSiglTotals {
            hp: report.hp_total,
            vp: report.vp_total,
            total: report.total,
            regions: report.regions.len(),
            skipped_regions: report.skipped_regions,
        };
        Ok(())
    })
}

/// Camera-frame gravity `R_cb * R_bs * (0, 0, 1)`.
///
/// # Safety
/// `r_cb` and `r_bs` hold 9 doubles, `out_gravity` 3 writable.
#[no_mangle]
pub unsafe extern "C" fn geosup_gravity_from_spatial(
    r_cb: *const f64,
    r_bs: *const f64,
    out_gravity: *mut f64,
) -> GeosupStatus {
    guard(|| {
        let g = gravity::gravity_from_spatial(&rotation(r_cb, "r_cb")?, &rotation(r_bs, "r_bs")?);
        slice_mut(out_gravity, 3, "out_gravity")?.copy_from_slice(g.vector().as_slice());
        Ok(())
    })
}

/// Spatial-to-body rotation from `count` paired accelerations (body and spatial frame).
///
/// # Safety
/// `body_xyz` and `spatial_xyz` hold `3 * count` doubles, `out_r_bs` 9 writable.
#[no_mangle]
pub unsafe extern "C" fn geosup_estimate_r_bs(
    body_xyz: *const f64,
    spatial_xyz: *const f64,
    count: usize,
    out_r_bs: *mut f64,
) -> GeosupStatus {
    guard(|| {
        let body = points(body_xyz, count)?;
        let spatial = points(spatial_xyz, count)?;
        let pairs: Vec<AccelPair> = body
            .into_iter()
            .zip(spatial)
            .map(|(body, spatial)| AccelPair { body, spatial })
            .collect();
        let r = gravity::estimate_r_bs(&pairs)?;
        write_rotation(&r, slice_mut(out_r_bs, 9, "out_r_bs")?);
        Ok(())
    })
}

/// Metrics of a predicted depth map against ground truth. Ground-truth zeros are ignored;
/// `filter_by_cap` drops ground truth deeper than `cap`.
///
/// # Safety
/// `pred` and `gt` hold `width * height` doubles, `out_metrics` is writable.
#[no_mangle]
pub unsafe extern "C" fn geosup_evaluate(
    pred: *const f64,
    gt: *const f64,
    width: usize,
    height: usize,
    cap: f64,
    filter_by_cap: bool,
    crop: GeosupCrop,
    out_metrics: *mut GeosupMetrics,
) -> GeosupStatus {
    guard(|| {
        let dst = out(out_metrics, "out_metrics")?;
        let n = dims(width, height)?;
        let pred = DepthMap::from_vec(width, height, slice(pred, n, "pred")?.to_vec())?;
        let gt = DepthMap::from_vec(width, height, slice(gt, n, "gt")?.to_vec())?;
        let opts = EvalOptions {
            cap,
            filter_gt_by_cap: filter_by_cap,
            crop: match crop {
                GeosupCrop::Full => CropMode::Full,
                GeosupCrop::Garg => CropMode::Garg,
            },
        };
        let r = metrics::evaluate(&pred, &gt, &opts)?;
        *dst = GeosupMetrics {
            abs_rel: r.abs_rel,
            sq_rel: r.sq_rel,
            rmse: r.rmse,
            rmse_log: r.rmse_log,
            log10: r.log10,
            a1: r.a1,
            a2: r.a2,
            a3: r.a3,
            valid: r.valid,
        };
        Ok(())
    })
}

/// Refines `depth` in place against a rectified stereo pair of `channels`-channel images
/// with values in `[0, 1]`. `gravity` and `class_ids` may be null when the geometric
/// weights are zero.
///
/// # Safety
/// `depth` holds `width * height` doubles, the images `width * height * channels`,
/// `class_ids` null or `width * height` bytes, `gravity` null or 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn geosup_refine_stereo(
    camera: *const GeosupCamera,
    config: *const GeosupConfig,
    depth: *mut f64,
    left: *const f64,
    right: *const f64,
    channels: usize,
    baseline: f64,
    gravity: *const f64,
    class_ids: *const u8,
    out_summary: *mut GeosupRefineSummary,
) -> GeosupStatus {
    guard(|| {
        let cam = &handle(camera, "camera")?.inner;
        let cfg = &handle(config, "config")?.inner;
        let dst = out(out_summary, "out_summary")?;
        let (w, h) = (cam.width(), cam.height());
        let n = dims(w, h)?;
        let pixels = n.checked_mul(channels).ok_or_else(|| invalid("image size overflows"))?;
        let depth_slice = slice_mut(depth, n, "depth")?;
        let init = DepthMap::from_vec(w, h, depth_slice.to_vec())?;
        let left = Image::from_vec(w, h, channels, slice(left, pixels, "left")?.to_vec())?;
        let right = Image::from_vec(w, h, channels, slice(right, pixels, "right")?.to_vec())?;
        let gravity = if gravity.is_null() {
            None
        } else {
            Some(gravity_vector(gravity)?)
        };
        let mask = if class_ids.is_null() {
            None
        } else {
            let ids = slice(class_ids, n, "class_ids")?.to_vec();
            Some(SemanticMask::from_class_ids(w, h, ids, &CategoryMapping::cityscapes())?)
        };
        let inputs = RefineInputs {
            supervision: Supervision::Stereo {
                left: &left,
                right: &right,
                baseline,
            },
            intrinsics: cam,
            gravity: gravity.as_ref(),
            mask: mask.as_ref(),
        };
        let (refined, trace) = refiner::refine(&init.to_inverse(), &inputs, cfg)?;
        depth_slice.copy_from_slice(refined.to_depth().data());
        *dst = GeosupRefineSummary {
            iterations: trace.iterations.len(),
            termination: match trace.termination {
                Termination::NoObjective => GeosupTermination::NoObjective,
                Termination::MaxIterations => GeosupTermination::MaxIterations,
                Termination::Converged => GeosupTermination::Converged,
                Termination::LineSearchStalled => GeosupTermination::LineSearchStalled,
            },
            initial_total: trace.initial.total(),
            final_total: trace.final_terms().total(),
        };
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn last_error() -> String {
        let p = geosup_last_error();
        assert!(!p.is_null());
        unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
    }

    #[test]
    fn null_output_is_reported() {
        let g = [0.0, 1.0, 0.0];
        let pts = [0.0; 9];
        let s = unsafe { geosup_loss_hp(pts.as_ptr(), 3, g.as_ptr(), ptr::null_mut()) };
        assert_eq!(s, GeosupStatus::NullPointer);
        assert!(last_error().contains("out_loss"));
    }

    #[test]
    fn success_clears_the_error() {
        let g = [0.0, 1.0, 0.0];
        let pts = [0.0, 1.0, 2.0, 1.0, 1.0, 5.0, 3.0, 1.0, 9.0];
        let mut loss = -1.0;
        let s = unsafe { geosup_loss_hp(pts.as_ptr(), 3, [0.0; 3].as_ptr(), &mut loss) };
        assert_eq!(s, GeosupStatus::InvalidInput);
        let s = unsafe { geosup_loss_hp(pts.as_ptr(), 3, g.as_ptr(), &mut loss) };
        assert_eq!(s, GeosupStatus::Ok);
        assert_eq!(loss, 0.0);
        assert!(geosup_last_error().is_null());
    }

    #[test]
    fn panics_become_status_codes() {
        let s = guard(|| panic!("boom"));
        assert_eq!(s, GeosupStatus::Panic);
        assert!(last_error().contains("boom"));
    }

    #[test]
    fn status_names_are_distinct() {
        let all = [
            GeosupStatus::Ok,
            GeosupStatus::NullPointer,
            GeosupStatus::InvalidInput,
            GeosupStatus::DimensionMismatch,
            GeosupStatus::Degenerate,
            GeosupStatus::NonFinite,
            GeosupStatus::Config,
            GeosupStatus::EmptyEvaluation,
            GeosupStatus::Io,
            GeosupStatus::Format,
            GeosupStatus::Panic,
        ];
        let names: std::collections::BTreeSet<String> = all
            .iter()
            .map(|s| {
                unsafe { CStr::from_ptr(geosup_status_name(*s)) }
                    .to_string_lossy()
                    .into_owned()
            })
            .collect();
        assert_eq!(names.len(), all.len());
    }

    #[test]
    fn invalid_config_update_is_rejected_and_ignored() {
        let mut cfg = ptr::null_mut();
        unsafe {
            assert_eq!(geosup_config_new(&mut cfg), GeosupStatus::Ok);
            assert_eq!(
                geosup_config_set_weights(cfg, -1.0, 0.0, 0.0, 0.0),
                GeosupStatus::Config
            );
            assert_eq!((*cfg).inner, RefinementConfig::default());
            assert_eq!(geosup_config_set_directions(cfg, 0), GeosupStatus::Ok);
            assert_eq!((*cfg).inner.vertical, VerticalSolver::Exact);
            geosup_config_free(cfg);
        }
    }
}
