//! C ABI over `valla-core`: load a MAP checkpoint or a fitted posterior state, predict, free.
//!
//! Every fallible function returns a [`VallaStatus`] code; the message of the last failure on
//! the calling thread is available through [`valla_last_error`]. Handles are opaque and must
//! be released with the matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use valla::cli::StateFile;
use valla::linalg::Matrix;
use valla::nn::{load_network, MlpNetwork};
use valla::Error;

/// Result codes. Zero is success.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VallaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    NotPositiveDefinite = 4,
    NonFinite = 5,
    CapExceeded = 6,
    Format = 7,
    VersionMismatch = 8,
    Io = 9,
    Config = 10,
    Panic = 11,
    Other = 12,
}

/// A MAP network loaded from a checkpoint.
pub struct VallaNetwork {
    net: MlpNetwork,
}

/// A fitted posterior state (any method) with its data normalization.
pub struct VallaPosterior {
    state: StateFile,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(err: &Error) -> VallaStatus {
    match err {
        Error::DimensionMismatch(_) => VallaStatus::DimensionMismatch,
        Error::NotPositiveDefinite { .. } => VallaStatus::NotPositiveDefinite,
        Error::NonFiniteValue { .. } => VallaStatus::NonFinite,
        Error::CapExceeded { .. } => VallaStatus::CapExceeded,
        Error::Format(_) | Error::Parse { .. } | Error::EmptyFile => VallaStatus::Format,
        Error::VersionMismatch { .. } => VallaStatus::VersionMismatch,
        Error::Io(_) => VallaStatus::Io,
        Error::Config(_) => VallaStatus::Config,
        _ => VallaStatus::Other,
    }
}

/// Runs `f`, recording any error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), (VallaStatus, String)>) -> VallaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => VallaStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            VallaStatus::Panic
        }
    }
}

fn lift(err: Error) -> (VallaStatus, String) {
    (status_of(&err), err.to_string())
}

fn null(what: &str) -> (VallaStatus, String) {
    (VallaStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg(path: *const c_char) -> Result<PathBuf, (VallaStatus, String)> {
    if path.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(path)
        .to_str()
        .map_err(|_| (VallaStatus::InvalidArgument, "path is not valid UTF-8".to_string()))?;
    Ok(PathBuf::from(s))
}

unsafe fn input_matrix(x: *const f64, n: usize, d: usize) -> Result<Matrix, (VallaStatus, String)> {
    if n > 0 && x.is_null() {
        return Err(null("x"));
    }
    let len = n
        .checked_mul(d)
        .ok_or((VallaStatus::InvalidArgument, "n·d overflows".to_string()))?;
    let data = if len == 0 { Vec::new() } else { std::slice::from_raw_parts(x, len).to_vec() };
    Matrix::from_vec(n, d, data).map_err(lift)
}

unsafe fn output_slice<'a>(out: *mut f64, len: usize, need: usize, what: &str) -> Result<&'a mut [f64], (VallaStatus, String)> {
    if need > 0 && out.is_null() {
        return Err(null(what));
    }
    if len < need {
        return Err((VallaStatus::InvalidArgument, format!("{what} holds {len} values, {need} needed")));
    }
    Ok(if need == 0 { &mut [] } else { std::slice::from_raw_parts_mut(out, need) })
}

/// Copies the last error message of this thread into `buf` (NUL-terminated, truncated to
/// `capacity`). Returns the full message length excluding the terminator.
///
/// # Safety
/// `buf` must be null or point to `capacity` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn valla_last_error(buf: *mut c_char, capacity: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && capacity > 0 {
            let n = msg.len().min(capacity - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Loads a MAP checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn valla_network_load(path: *const c_char, out: *mut *mut VallaNetwork) -> VallaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = std::ptr::null_mut();
        let net = load_network(&path_arg(path)?).map_err(lift)?;
        *out = Box::into_raw(Box::new(VallaNetwork { net }));
        Ok(())
    })
}

/// # Safety
/// `net` must be null or a handle from [`valla_network_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn valla_network_free(net: *mut VallaNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Input and output dimensions; zero for a null handle.
///
/// # Safety
/// `net` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn valla_network_dims(net: *const VallaNetwork, input_dim: *mut usize, output_dim: *mut usize) {
    let (d, c) = net.as_ref().map_or((0, 0), |h| (h.net.input_dim(), h.net.output_dim()));
    if !input_dim.is_null() {
        *input_dim = d;
    }
    if !output_dim.is_null() {
        *output_dim = c;
    }
}

/// Network outputs for `n` row-major inputs of width `d`, written row-major to `out`
/// (`n·C` values, `out_len` capacity).
///
/// # Safety
/// `x` must hold `n·d` values and `out` `out_len` writable values.
#[no_mangle]
pub unsafe extern "C" fn valla_network_predict(
    net: *const VallaNetwork,
    x: *const f64,
    n: usize,
    d: usize,
    out: *mut f64,
    out_len: usize,
) -> VallaStatus {
    guard(|| {
        let h = net.as_ref().ok_or_else(|| null("network"))?;
        let x = input_matrix(x, n, d)?;
        let y = h.net.predict(&x).map_err(lift)?;
        output_slice(out, out_len, y.as_slice().len(), "out")?.copy_from_slice(y.as_slice());
        Ok(())
    })
}

/// Loads a fitted posterior state written by `valla fit`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn valla_posterior_load(path: *const c_char, out: *mut *mut VallaPosterior) -> VallaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = std::ptr::null_mut();
        let state = StateFile::load(&path_arg(path)?).map_err(lift)?;
        *out = Box::into_raw(Box::new(VallaPosterior { state }));
        Ok(())
    })
}

/// # Safety
/// `post` must be null or a handle from [`valla_posterior_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn valla_posterior_free(post: *mut VallaPosterior) {
    if !post.is_null() {
        drop(Box::from_raw(post));
    }
}

/// Input and output dimensions; zero for a null handle.
///
/// # Safety
/// `post` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn valla_posterior_dims(post: *const VallaPosterior, input_dim: *mut usize, output_dim: *mut usize) {
    let (d, c) = post.as_ref().map_or((0, 0), |h| {
        let net = h.state.posterior.network();
        (net.input_dim(), net.output_dim())
    });
    if !input_dim.is_null() {
        *input_dim = d;
    }
    if !output_dim.is_null() {
        *output_dim = c;
    }
}

/// Predictive in raw data units: `mean` gets `n·C` values (row-major), `cov` gets the `n`
/// per-point `C × C` function-space covariance blocks (`n·C·C` values). `noise_variance`, if
/// not null, receives σ² (zero for classification). `cov` may be null to skip it.
///
/// # Safety
/// `x` must hold `n·d` values; `mean` and `cov` must hold `mean_len` and `cov_len` writable values.
#[no_mangle]
pub unsafe extern "C" fn valla_posterior_predict(
    post: *const VallaPosterior,
    x: *const f64,
    n: usize,
    d: usize,
    mean: *mut f64,
    mean_len: usize,
    cov: *mut f64,
    cov_len: usize,
    noise_variance: *mut f64,
) -> VallaStatus {
    guard(|| {
        let h = post.as_ref().ok_or_else(|| null("posterior"))?;
        let x = input_matrix(x, n, d)?;
        let pred = h.state.predict_raw(&x).map_err(lift)?;
        output_slice(mean, mean_len, pred.mean.as_slice().len(), "mean")?.copy_from_slice(pred.mean.as_slice());
        if !cov.is_null() {
            output_slice(cov, cov_len, pred.covariance.as_slice().len(), "cov")?
                .copy_from_slice(pred.covariance.as_slice());
        }
        if !noise_variance.is_null() {
            *noise_variance = pred.likelihood.noise_variance().unwrap_or(0.0);
        }
        Ok(())
    })
}
