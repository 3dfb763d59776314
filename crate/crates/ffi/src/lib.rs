//! C ABI over the phase-field library.
//!
//! Handles are opaque pointers owned by the caller and released with the matching `_free`
//! function. Every fallible call returns a [`PhaseStatus`]; on failure the message is
//! available from [`phase_last_error`] on the same thread until the next failing call.
//! Panics never cross the boundary: they are caught and reported as `PHASE_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use phase_core::extract::{extract, measure, sample_field_grid, write_contour_csv, write_obj, FieldQuantity, LevelSet};
use phase_core::field::{load_checkpoint, Checkpoint};
use phase_core::metrics::MetricReport;
use phase_core::oracle::sigma0_quadrature;
use phase_core::transform::{log_transform, TransformConfig};
use phase_core::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Config = 5,
    NumericFailure = 6,
    Panic = 7,
}

impl From<&Error> for PhaseStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Parse { .. } => PhaseStatus::Parse,
            Error::Io { .. } => PhaseStatus::Io,
            Error::Invalid(_) => PhaseStatus::InvalidArgument,
            Error::Config(_) => PhaseStatus::Config,
            _ => PhaseStatus::NumericFailure,
        }
    }
}

/// A trained field loaded from a checkpoint.
pub struct PhaseField {
    ckpt: Checkpoint,
}

/// An extracted zero level set (contour in 2D, triangle mesh in 3D).
pub struct PhaseLevelSet {
    inner: LevelSet,
}

/// The four distances between two point sets.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhaseMetrics {
    pub chamfer_one_sided: f64,
    pub chamfer: f64,
    pub hausdorff_one_sided: f64,
    pub hausdorff: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn fail(status: PhaseStatus, msg: &str) -> PhaseStatus {
    set_error(msg);
    status
}

/// Runs `f`, converting crate errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), PhaseStatusError>) -> PhaseStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PhaseStatus::Ok,
        Ok(Err(PhaseStatusError(s, m))) => fail(s, &m),
        Err(_) => fail(PhaseStatus::Panic, "internal panic"),
    }
}

struct PhaseStatusError(PhaseStatus, String);

impl From<Error> for PhaseStatusError {
    fn from(e: Error) -> Self {
        PhaseStatusError((&e).into(), e.to_string())
    }
}

fn null(what: &str) -> PhaseStatusError {
    PhaseStatusError(PhaseStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> PhaseStatusError {
    PhaseStatusError(PhaseStatus::InvalidArgument, msg.into())
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, PhaseStatusError> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid("path is not valid UTF-8"))?;
    Ok(PathBuf::from(s))
}

/// Message of the last failed call on this thread (empty if none). Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn phase_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn phase_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a checkpoint into a new field handle written to `*out`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn phase_field_load(path: *const c_char, out: *mut *mut PhaseField) -> PhaseStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let ckpt = load_checkpoint(&path_arg(path)?)?;
        *out = Box::into_raw(Box::new(PhaseField { ckpt }));
        Ok(())
    })
}

/// Releases a field handle; null is ignored.
///
/// # Safety
/// `field` must come from [`phase_field_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn phase_field_free(field: *mut PhaseField) {
    if !field.is_null() {
        drop(Box::from_raw(field));
    }
}

/// Spatial dimension of the field (0 for a null handle).
///
/// # Safety
/// `field` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn phase_field_dim(field: *const PhaseField) -> u32 {
    field.as_ref().map_or(0, |f| f.ckpt.network.config().dim as u32)
}

/// Phase-field width the field was trained with (NaN for a null handle).
///
/// # Safety
/// `field` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn phase_field_epsilon(field: *const PhaseField) -> f64 {
    field.as_ref().map_or(f64::NAN, |f| f.ckpt.epsilon)
}

/// Evaluates `u` at `n` points (`n * dim` coordinates). `grad_out` may be null; otherwise
/// it receives `n * dim` gradient entries.
///
/// # Safety
/// Buffers must hold the stated number of `double`s.
#[no_mangle]
pub unsafe extern "C" fn phase_field_eval(
    field: *const PhaseField,
    points: *const f64,
    n: usize,
    u_out: *mut f64,
    grad_out: *mut f64,
) -> PhaseStatus {
    guard(|| {
        let f = field.as_ref().ok_or_else(|| null("field"))?;
        if points.is_null() || u_out.is_null() {
            return Err(null("points or u_out"));
        }
        let d = f.ckpt.network.config().dim;
        let xs = std::slice::from_raw_parts(points, n * d);
        let e = f.ckpt.network.eval_batch(xs, !grad_out.is_null())?;
        std::slice::from_raw_parts_mut(u_out, n).copy_from_slice(&e.u);
        if !grad_out.is_null() {
            std::slice::from_raw_parts_mut(grad_out, n * d).copy_from_slice(&e.grad);
        }
        Ok(())
    })
}

/// Evaluates the viscous signed distance `w` at `n` points.
///
/// # Safety
/// Buffers must hold the stated number of `double`s.
#[no_mangle]
pub unsafe extern "C" fn phase_field_eval_distance(
    field: *const PhaseField,
    points: *const f64,
    n: usize,
    w_out: *mut f64,
) -> PhaseStatus {
    guard(|| {
        let f = field.as_ref().ok_or_else(|| null("field"))?;
        if points.is_null() || w_out.is_null() {
            return Err(null("points or w_out"));
        }
        let d = f.ckpt.network.config().dim;
        let tc = TransformConfig::new(f.ckpt.epsilon);
        let u = f.ckpt.network.eval_batch(std::slice::from_raw_parts(points, n * d), false)?.u;
        let out = std::slice::from_raw_parts_mut(w_out, n);
        for (o, &ui) in out.iter_mut().zip(&u) {
            *o = log_transform(ui, &tc);
        }
        Ok(())
    })
}

/// Extracts the zero level set on a grid with `resolution` cells per axis over the
/// checkpoint's domain.
///
/// # Safety
/// `field` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn phase_field_extract(
    field: *const PhaseField,
    resolution: usize,
    out: *mut *mut PhaseLevelSet,
) -> PhaseStatus {
    guard(|| {
        let f = field.as_ref().ok_or_else(|| null("field"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let d = f.ckpt.network.config().dim;
        if d < 2 {
            return Err(invalid("level sets need a 2D or 3D field"));
        }
        let grid = sample_field_grid(&f.ckpt.network, &f.ckpt.domain, &vec![resolution; d], FieldQuantity::U)?;
        let inner = extract(&grid, 0.0)?;
        *out = Box::into_raw(Box::new(PhaseLevelSet { inner }));
        Ok(())
    })
}

/// Releases a level-set handle; null is ignored.
///
/// # Safety
/// `ls` must come from [`phase_field_extract`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn phase_levelset_free(ls: *mut PhaseLevelSet) {
    if !ls.is_null() {
        drop(Box::from_raw(ls));
    }
}

/// Contour length (2D) or surface area (3D); fails on an empty level set.
///
/// # Safety
/// `ls` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn phase_levelset_measure(ls: *const PhaseLevelSet, out: *mut f64) -> PhaseStatus {
    guard(|| {
        let l = ls.as_ref().ok_or_else(|| null("level set"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = measure(&l.inner)?;
        Ok(())
    })
}

/// Writes the level set as OBJ (3D) or `polyline,x,y` CSV (2D).
///
/// # Safety
/// `ls` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn phase_levelset_write(ls: *const PhaseLevelSet, path: *const c_char) -> PhaseStatus {
    guard(|| {
        let l = ls.as_ref().ok_or_else(|| null("level set"))?;
        let path = path_arg(path)?;
        let mut buf = Vec::new();
        match &l.inner {
            LevelSet::Mesh(m) => write_obj(&mut buf, m),
            LevelSet::Contour(c) => write_contour_csv(&mut buf, c),
        }
        .and_then(|_| std::fs::write(&path, buf))
        .map_err(|e| Error::Io { path, source: e })?;
        Ok(())
    })
}

/// Chamfer and Hausdorff distances between `na` points `a` and `nb` points `b`.
///
/// # Safety
/// `a` and `b` must hold `na * dim` and `nb * dim` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn phase_metrics(
    a: *const f64,
    na: usize,
    b: *const f64,
    nb: usize,
    dim: usize,
    out: *mut PhaseMetrics,
) -> PhaseStatus {
    guard(|| {
        if a.is_null() || b.is_null() || out.is_null() {
            return Err(null("a, b or out"));
        }
        let r = MetricReport::compute(
            std::slice::from_raw_parts(a, na * dim),
            std::slice::from_raw_parts(b, nb * dim),
            dim,
            0,
        )?;
        *out = PhaseMetrics {
            chamfer_one_sided: r.chamfer_one_sided,
            chamfer: r.chamfer,
            hausdorff_one_sided: r.hausdorff_one_sided,
            hausdorff: r.hausdorff,
        };
        Ok(())
    })
}

/// Surface tension constant of the double well by trapezoid quadrature.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn phase_sigma0(quad_points: usize, out: *mut f64) -> PhaseStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = sigma0_quadrature(quad_points)?;
        Ok(())
    })
}

/// Runs a full training from a config file, as the `train` command does.
///
/// # Safety
/// `config_path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn phase_train(config_path: *const c_char) -> PhaseStatus {
    guard(|| {
        let cfg = phase_core::config::RunConfig::from_file(&path_arg(config_path)?)?;
        phase_core::cli::run_training(&cfg, true).map_err(|e| {
            let status = e
                .chain()
                .find_map(|c| c.downcast_ref::<Error>())
                .map_or(PhaseStatus::Config, PhaseStatus::from);
            PhaseStatusError(status, format!("{e:#}"))
        })?;
        Ok(())
    })
}
