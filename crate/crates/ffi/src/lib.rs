//! C interface to `wigner_ldp`.
//!
//! A variance profile lives behind an opaque [`WlModel`] handle, created
//! from a built-in name or a TOML document and released with
//! [`wl_model_free`]. Every fallible call returns a [`WlStatus`]; on failure
//! a human-readable message is kept per thread and can be copied out with
//! [`wl_last_error_message`]. Outputs are written through caller-owned
//! pointers and are left untouched when the call fails.
//!
//! Panics never cross the boundary: they are caught and reported as
//! [`WlStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};

use num_complex::Complex64;
use wigner_ldp::dyson::{solve_dyson, SpectrumModel};
use wigner_ldp::profile::load_profile;
use wigner_ldp::ratefn::{rate_function, RateOptions};
use wigner_ldp::{Error, VarianceProfile};

/// Return codes of every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WlStatus {
    Ok = 0,
    NullPointer = 1,
    /// Malformed input: bad UTF-8, unknown profile name, invalid TOML or
    /// profile, argument out of range.
    InvalidArgument = 2,
    /// The point lies inside the support where only `Im z > 0` is allowed.
    BelowEdge = 3,
    NonConvergence = 4,
    /// Any other numerical failure.
    Numeric = 5,
    /// An output buffer is shorter than required.
    BufferTooSmall = 6,
    Panic = 7,
}

/// Opaque handle to a variance profile with its cached spectral data.
pub struct WlModel {
    model: SpectrumModel,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(err: &Error) -> WlStatus {
    match err {
        Error::BelowEdge { .. } => WlStatus::BelowEdge,
        Error::NonConvergence { .. } => WlStatus::NonConvergence,
        e if e.is_usage() => WlStatus::InvalidArgument,
        _ => WlStatus::Numeric,
    }
}

/// Runs `f`, translating errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), (WlStatus, String)>) -> WlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            WlStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            WlStatus::Panic
        }
    }
}

fn lib<T>(r: wigner_ldp::Result<T>) -> Result<T, (WlStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (WlStatus, String) {
    (WlStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (WlStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (WlStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn model_arg<'a>(m: *const WlModel) -> Result<&'a SpectrumModel, (WlStatus, String)> {
    m.as_ref().map(|h| &h.model).ok_or_else(|| null("model"))
}

unsafe fn out_slice<'a>(p: *mut f64, len: usize, need: usize, what: &str) -> Result<&'a mut [f64], (WlStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    if len < need {
        return Err((WlStatus::BufferTooSmall, format!("{what} holds {len} values, {need} needed")));
    }
    Ok(std::slice::from_raw_parts_mut(p, need))
}

fn into_handle(profile: VarianceProfile, out: *mut *mut WlModel) -> Result<(), (WlStatus, String)> {
    let model = lib(SpectrumModel::new(profile))?;
    // SAFETY: checked non-null by the callers
    unsafe { *out = Box::into_raw(Box::new(WlModel { model })) };
    Ok(())
}

/// Creates a model from a built-in profile name (`constant`, `wishart`,
/// `two-block`, `block-third`).
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn wl_model_from_name(name: *const c_char, out: *mut *mut WlModel) -> WlStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let name = str_arg(name, "name")?;
        into_handle(lib(VarianceProfile::named(name))?, out)
    })
}

/// Creates a model from a TOML profile document. Relative grid-file paths
/// resolve against the current directory.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn wl_model_from_toml(toml: *const c_char, out: *mut *mut WlModel) -> WlStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = str_arg(toml, "toml")?;
        let profile = lib(load_profile(text, None).and_then(|p| p.into_piecewise()))?;
        into_handle(profile, out)
    })
}

/// Releases a model. Passing null is a no-op.
///
/// # Safety
/// `model` must come from a constructor of this library and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn wl_model_free(model: *mut WlModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of blocks `p` of the profile.
///
/// # Safety
/// `model` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn wl_model_blocks(model: *const WlModel, out: *mut usize) -> WlStatus {
    guard(|| {
        let m = model_arg(model)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = m.profile().blocks();
        Ok(())
    })
}

/// Right edge of the support of the limiting spectral measure.
///
/// # Safety
/// `model` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn wl_model_edge(model: *const WlModel, out: *mut f64) -> WlStatus {
    guard(|| {
        let m = model_arg(model)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = m.r_edge();
        Ok(())
    })
}

/// Solves the Dyson system at `z = re + i·im` and writes the unit-mass
/// block transforms `m_k(z)` into `m_re`/`m_im`, each of capacity `len`
/// (at least the block count). Real `z` must lie above the edge.
///
/// # Safety
/// `model` must be valid; `m_re` and `m_im` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn wl_dyson_solve(
    model: *const WlModel,
    re: f64,
    im: f64,
    m_re: *mut f64,
    m_im: *mut f64,
    len: usize,
) -> WlStatus {
    guard(|| {
        let m = model_arg(model)?;
        let p = m.profile().blocks();
        let a = out_slice(m_re, len, p, "m_re")?;
        let b = out_slice(m_im, len, p, "m_im")?;
        let sol = dyson_at(m, re, im)?;
        for (k, v) in sol.m.iter().enumerate() {
            a[k] = v.re;
            b[k] = v.im;
        }
        Ok(())
    })
}

fn dyson_at(m: &SpectrumModel, re: f64, im: f64) -> Result<wigner_ldp::dyson::DysonSolution, (WlStatus, String)> {
    if !(re.is_finite() && im.is_finite()) || im < 0.0 {
        return Err((WlStatus::InvalidArgument, format!("z = {re}{im:+}i must be finite with Im z >= 0")));
    }
    if im == 0.0 && re <= m.r_edge() {
        let e = Error::BelowEdge { x: re, edge: m.r_edge() };
        return Err((status_of(&e), e.to_string()));
    }
    lib(solve_dyson(m.profile(), Complex64::new(re, im), None))
}

/// Stieltjes transform `G(z) = Σ_k w_k m_k(z)` of the limiting measure.
///
/// # Safety
/// `model`, `out_re` and `out_im` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn wl_stieltjes(
    model: *const WlModel,
    re: f64,
    im: f64,
    out_re: *mut f64,
    out_im: *mut f64,
) -> WlStatus {
    guard(|| {
        let m = model_arg(model)?;
        if out_re.is_null() || out_im.is_null() {
            return Err(null("output"));
        }
        let g = dyson_at(m, re, im)?.g_total;
        *out_re = g.re;
        *out_im = g.im;
        Ok(())
    })
}

/// Rate function `I(x)` of the largest eigenvalue. Below the edge the rate
/// is `+inf`. When `psi_star` is non-null it receives the optimal block
/// direction (capacity `len`, at least the block count); `theta_star` may
/// be null.
///
/// # Safety
/// `model` and `rate` must be valid; optional outputs null or valid.
#[no_mangle]
pub unsafe extern "C" fn wl_rate_function(
    model: *const WlModel,
    x: f64,
    rate: *mut f64,
    theta_star: *mut f64,
    psi_star: *mut f64,
    len: usize,
) -> WlStatus {
    guard(|| {
        let m = model_arg(model)?;
        if rate.is_null() {
            return Err(null("rate"));
        }
        if !x.is_finite() {
            return Err((WlStatus::InvalidArgument, format!("x = {x} is not finite")));
        }
        let psi = if psi_star.is_null() {
            None
        } else {
            Some(out_slice(psi_star, len, m.profile().blocks(), "psi_star")?)
        };
        let report = lib(rate_function(m, x, &RateOptions::default()))?;
        *rate = report.rate;
        if let Some(t) = theta_star.as_mut() {
            *t = report.theta_star;
        }
        if let Some(psi) = psi {
            psi.copy_from_slice(report.psi_star.as_slice());
        }
        Ok(())
    })
}

/// Copies the calling thread's last error message (NUL-terminated,
/// truncated to fit) into `buf` and returns the full message length
/// excluding the terminator. With a null `buf` only the length is returned.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn wl_last_error_message(buf: *mut c_char, len: usize) -> usize {
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

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn wl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
