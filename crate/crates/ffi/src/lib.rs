//! C ABI over `conlab`.
//!
//! Objects cross the boundary as opaque handles created by `*_new` /
//! `*_load` functions and released with the matching `*_free`. Every
//! fallible call returns a [`ConlabStatus`] and writes results through out
//! pointers, which are left untouched on failure. The message for the last
//! failure on the calling thread is available from
//! [`conlab_last_error_message`].
//!
//! Panics never unwind into C: they are caught and reported as
//! `CONLAB_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use conlab::ccm::{risk_delta, select_mu};
use conlab::format::{load_distribution, read_distribution};
use conlab::lambert::lambert_w0;
use conlab::losses::population_risk;
use conlab::synth::make_finite;
use conlab::{Error, FiniteDistribution, LossKind, Mu, ScoreTable};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConlabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Io = 4,
    Precondition = 5,
    Internal = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConlabLoss {
    Ell1 = 0,
    CrossEntropy = 1,
    HingeMargin = 2,
}

impl From<ConlabLoss> for LossKind {
    fn from(l: ConlabLoss) -> Self {
        match l {
            ConlabLoss::Ell1 => LossKind::Ell1,
            ConlabLoss::CrossEntropy => LossKind::CrossEntropy,
            ConlabLoss::HingeMargin => LossKind::HingeMargin,
        }
    }
}

/// Opaque finite distribution with its constraint map.
pub struct ConlabDistribution(FiniteDistribution);

/// Opaque score table: one row of `labels` scores per support point.
pub struct ConlabScores(ScoreTable);

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ConlabRisk {
    pub risk: f64,
    pub violation_l1: f64,
    pub violation_ce: f64,
    /// Expected structured margin loss.
    pub margin: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ConlabRiskDelta {
    pub delta_ce: f64,
    pub lower_bound_ce: f64,
    pub delta_l1: f64,
    pub lower_bound_l1: f64,
    pub delta_margin: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> ConlabStatus {
    match e {
        Error::Parse { .. } => ConlabStatus::Parse,
        Error::Io(_) => ConlabStatus::Io,
        Error::Precondition(_) | Error::Feasibility(_) => ConlabStatus::Precondition,
        Error::Optimization { .. } | Error::Construction(_) => ConlabStatus::Internal,
        _ => ConlabStatus::InvalidArgument,
    }
}

struct Fail(ConlabStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(ConlabStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> ConlabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ConlabStatus::Ok,
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
            ConlabStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(ConlabStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write<T>(out: *mut T, v: T) {
    out.write(v);
}

/// Message for the last failed call on this thread, or null. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn conlab_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static, NUL-terminated version string.
#[no_mangle]
pub extern "C" fn conlab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a distribution in the tabular text format from `path`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn conlab_distribution_load(
    path: *const c_char,
    out: *mut *mut ConlabDistribution,
) -> ConlabStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let d = load_distribution(Path::new(path))?;
        write(out, Box::into_raw(Box::new(ConlabDistribution(d))));
        Ok(())
    })
}

/// Parses a distribution from text in the tabular format.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn conlab_distribution_parse(
    text: *const c_char,
    out: *mut *mut ConlabDistribution,
) -> ConlabStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let d = read_distribution(text)?;
        write(out, Box::into_raw(Box::new(ConlabDistribution(d))));
        Ok(())
    })
}

/// Uniform-weight synthetic distribution with noise rate near `noise`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn conlab_distribution_synthetic(
    labels: usize,
    points: usize,
    noise: f64,
    seed: u64,
    out: *mut *mut ConlabDistribution,
) -> ConlabStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let s = make_finite(labels, points, noise, seed)?;
        write(out, Box::into_raw(Box::new(ConlabDistribution(s.dist))));
        Ok(())
    })
}

/// # Safety
/// `dist` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn conlab_distribution_free(dist: *mut ConlabDistribution) {
    if !dist.is_null() {
        drop(Box::from_raw(dist));
    }
}

/// Label count, support size and oracle noise rate. Any out pointer may be
/// null.
///
/// # Safety
/// `dist` must be a live handle; non-null out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn conlab_distribution_info(
    dist: *const ConlabDistribution,
    labels: *mut usize,
    points: *mut usize,
    noise_rate: *mut f64,
) -> ConlabStatus {
    guard(|| {
        let d = &handle(dist, "dist")?.0;
        if !labels.is_null() {
            write(labels, d.num_labels());
        }
        if !points.is_null() {
            write(points, d.len());
        }
        if !noise_rate.is_null() {
            write(noise_rate, d.noise_rate());
        }
        Ok(())
    })
}

/// Score table from `rows * labels` row-major values.
///
/// # Safety
/// `data` must point to `rows * labels` readable doubles; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn conlab_scores_new(
    data: *const f64,
    rows: usize,
    labels: usize,
    out: *mut *mut ConlabScores,
) -> ConlabStatus {
    guard(|| {
        if data.is_null() {
            return Err(null("data"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let len = rows
            .checked_mul(labels)
            .ok_or_else(|| Fail(ConlabStatus::InvalidArgument, "rows * labels overflows".into()))?;
        let flat = std::slice::from_raw_parts(data, len);
        let table = ScoreTable::new(labels, flat.chunks(labels.max(1)).map(<[f64]>::to_vec).collect())?;
        write(out, Box::into_raw(Box::new(ConlabScores(table))));
        Ok(())
    })
}

/// # Safety
/// `scores` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn conlab_scores_free(scores: *mut ConlabScores) {
    if !scores.is_null() {
        drop(Box::from_raw(scores));
    }
}

/// Population risk and violations of `scores` under `dist`.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn conlab_population_risk(
    dist: *const ConlabDistribution,
    scores: *const ConlabScores,
    loss: ConlabLoss,
    out: *mut ConlabRisk,
) -> ConlabStatus {
    guard(|| {
        let d = &handle(dist, "dist")?.0;
        let f = &handle(scores, "scores")?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        let r = population_risk(d, f, loss.into())?;
        write(
            out,
            ConlabRisk {
                risk: r.risk,
                violation_l1: r.violation_l1,
                violation_ce: r.violation_ce,
                margin: r.margin.unwrap_or(f64::NAN),
            },
        );
        Ok(())
    })
}

/// Risk change from constrained inference at strength `mu`; pass
/// `INFINITY` for strict inference.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn conlab_risk_delta(
    dist: *const ConlabDistribution,
    scores: *const ConlabScores,
    mu: f64,
    out: *mut ConlabRiskDelta,
) -> ConlabStatus {
    guard(|| {
        let d = &handle(dist, "dist")?.0;
        let f = &handle(scores, "scores")?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        let r = risk_delta(d, f, Mu::new(mu)?)?;
        write(
            out,
            ConlabRiskDelta {
                delta_ce: r.delta_ce,
                lower_bound_ce: r.lower_bound_ce,
                delta_l1: r.delta_l1,
                lower_bound_l1: r.lower_bound_l1,
                delta_margin: r.delta_margin,
            },
        );
        Ok(())
    })
}

/// Largest `mu` whose cross-entropy lower bound is non-negative, given the
/// model violation and the oracle noise rate. Writes `INFINITY` when the
/// noise rate is zero.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn conlab_select_mu(violation: f64, noise_rate: f64, out: *mut f64) -> ConlabStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        write(out, select_mu(violation, noise_rate)?.value());
        Ok(())
    })
}

/// Principal branch of the Lambert W function, `t >= -1/e`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn conlab_lambert_w0(t: f64, out: *mut f64) -> ConlabStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        write(out, lambert_w0(t)?);
        Ok(())
    })
}
