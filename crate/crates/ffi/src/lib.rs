//! C ABI over `losscorr`.
//!
//! Handles are opaque and owned by the caller once returned; release each with
//! its `*_free` function. Every fallible call returns an [`LcStatus`]; on failure
//! [`lc_last_error_message`] describes the most recent error on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use losscorr::estimator::{estimate, EstimatorConfig, EstimatorMode};
use losscorr::{CorrectedLoss, DenseMatrix, DenseVector, Error, LossMode, MlpNetwork, NoiseMatrix, NoiseSpec};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dimension = 3,
    Singular = 4,
    Parse = 5,
    Internal = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LcLossMode {
    Plain = 0,
    Backward = 1,
    Forward = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LcEstimatorMode {
    Argmax = 0,
    Percentile = 1,
}

pub struct LcNoiseMatrix(NoiseMatrix);
pub struct LcLoss(CorrectedLoss);
pub struct LcNetwork(MlpNetwork);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> LcStatus {
    match e {
        Error::Dimension(_) => LcStatus::Dimension,
        Error::SingularMatrix { .. } | Error::SingularCorrection { .. } => LcStatus::Singular,
        Error::Parse { .. } | Error::Json(_) => LcStatus::Parse,
        _ => LcStatus::InvalidArgument,
    }
}

struct Failure(LcStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(LcStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> LcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LcStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            LcStatus::Internal
        }
    }
}

unsafe fn slice<'a, T>(ptr: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn slice_mut<'a, T>(ptr: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

unsafe fn handle<'a, T>(ptr: *const T, what: &str) -> Result<&'a T, Failure> {
    ptr.as_ref().ok_or_else(|| null(what))
}

unsafe fn emit<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn check_len(got: usize, want: usize, what: &str) -> Result<(), Failure> {
    if got == want {
        Ok(())
    } else {
        Err(Failure(
            LcStatus::Dimension,
            format!("{what}: expected length {want}, got {got}"),
        ))
    }
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn lc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// NUL-terminated library version.
#[no_mangle]
pub extern "C" fn lc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Validates a row-major `classes × classes` row-stochastic matrix.
///
/// # Safety
/// `entries` must point to `classes * classes` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lc_noise_matrix_new(
    entries: *const f64,
    classes: usize,
    out: *mut *mut LcNoiseMatrix,
) -> LcStatus {
    guard(|| {
        let e = slice(entries, classes * classes, "entries")?;
        let m = DenseMatrix::from_row_major(classes, classes, e.to_vec())?;
        emit(out, LcNoiseMatrix(NoiseMatrix::new(m)?))
    })
}

/// Symmetric noise: `1 − level` on the diagonal, the rest spread evenly.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lc_noise_matrix_symmetric(
    classes: usize,
    level: f64,
    out: *mut *mut LcNoiseMatrix,
) -> LcStatus {
    guard(|| emit(out, LcNoiseMatrix(NoiseSpec::symmetric(level).build(classes)?)))
}

/// # Safety
/// `matrix` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn lc_noise_matrix_classes(matrix: *const LcNoiseMatrix) -> usize {
    matrix.as_ref().map_or(0, |m| m.0.classes())
}

/// Copies the row-major entries into `out` (`classes²` doubles).
///
/// # Safety
/// `matrix` must be a live handle; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn lc_noise_matrix_entries(
    matrix: *const LcNoiseMatrix,
    out: *mut f64,
    len: usize,
) -> LcStatus {
    guard(|| {
        let m = &handle(matrix, "matrix")?.0;
        let src = m.matrix().as_slice();
        check_len(len, src.len(), "out")?;
        slice_mut(out, len, "out")?.copy_from_slice(src);
        Ok(())
    })
}

/// Row-major inverse of `(1 − identity_mix)·T + identity_mix·I`.
///
/// # Safety
/// `matrix` must be a live handle; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn lc_noise_matrix_inverse(
    matrix: *const LcNoiseMatrix,
    identity_mix: f64,
    out: *mut f64,
    len: usize,
) -> LcStatus {
    guard(|| {
        let m = &handle(matrix, "matrix")?.0;
        let inv = m.inverse(identity_mix)?;
        check_len(len, inv.as_slice().len(), "out")?;
        slice_mut(out, len, "out")?.copy_from_slice(inv.as_slice());
        Ok(())
    })
}

/// Draws one noisy label per clean label.
///
/// # Safety
/// `labels` and `out` must each hold `n` elements.
#[no_mangle]
pub unsafe extern "C" fn lc_noise_matrix_corrupt(
    matrix: *const LcNoiseMatrix,
    labels: *const usize,
    n: usize,
    seed: u64,
    out: *mut usize,
) -> LcStatus {
    guard(|| {
        let m = &handle(matrix, "matrix")?.0;
        let noisy = m.corrupt(slice(labels, n, "labels")?, seed)?;
        slice_mut(out, n, "out")?.copy_from_slice(&noisy);
        Ok(())
    })
}

/// # Safety
/// `matrix` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lc_noise_matrix_free(matrix: *mut LcNoiseMatrix) {
    if !matrix.is_null() {
        drop(Box::from_raw(matrix));
    }
}

/// `noise` may be null only for the plain loss. The matrix is copied.
///
/// # Safety
/// `noise` must be a live handle or null; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lc_loss_new(
    mode: LcLossMode,
    noise: *const LcNoiseMatrix,
    identity_mix: f64,
    out: *mut *mut LcLoss,
) -> LcStatus {
    guard(|| {
        let mode = match mode {
            LcLossMode::Plain => LossMode::Plain,
            LcLossMode::Backward => LossMode::Backward,
            LcLossMode::Forward => LossMode::Forward,
        };
        let t = noise.as_ref().map(|n| n.0.clone());
        if mode != LossMode::Plain && t.is_none() {
            return Err(null("noise"));
        }
        emit(out, LcLoss(CorrectedLoss::new(mode, t, identity_mix)?))
    })
}

/// Loss value at `logits` for `label`; writes `∂loss/∂logits` to `grad` when non-null.
///
/// # Safety
/// `logits` must hold `len` doubles, `grad` (if non-null) likewise; `value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lc_loss_evaluate(
    loss: *const LcLoss,
    label: usize,
    logits: *const f64,
    len: usize,
    value: *mut f64,
    grad: *mut f64,
) -> LcStatus {
    guard(|| {
        let loss = &handle(loss, "loss")?.0;
        let z = slice(logits, len, "logits")?;
        if let Some(c) = loss.classes() {
            check_len(len, c, "logits")?;
        }
        if label >= len {
            return Err(Failure(
                LcStatus::InvalidArgument,
                format!("label {label} out of range for {len} logits"),
            ));
        }
        let z = DenseVector::new(z.to_vec())?;
        let eval = loss.evaluate(label, &z);
        if value.is_null() {
            return Err(null("value"));
        }
        *value = eval.value;
        if !grad.is_null() {
            slice_mut(grad, len, "grad")?.copy_from_slice(eval.grad_logits.as_slice());
        }
        Ok(())
    })
}

/// # Safety
/// `loss` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lc_loss_free(loss: *mut LcLoss) {
    if !loss.is_null() {
        drop(Box::from_raw(loss));
    }
}

/// Loads a network checkpoint from its JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lc_network_from_json(json: *const c_char, out: *mut *mut LcNetwork) -> LcStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|e| Failure(LcStatus::Parse, format!("checkpoint is not UTF-8: {e}")))?;
        emit(out, LcNetwork(MlpNetwork::from_json(text)?))
    })
}

/// # Safety
/// `net` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn lc_network_input_dim(net: *const LcNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.0.input_dim())
}

/// # Safety
/// `net` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn lc_network_output_dim(net: *const LcNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.0.output_dim())
}

/// Inference-mode logits for one input.
///
/// # Safety
/// `input` must hold `input_len` doubles and `out` `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn lc_network_logits(
    net: *const LcNetwork,
    input: *const f64,
    input_len: usize,
    out: *mut f64,
    out_len: usize,
) -> LcStatus {
    guard(|| {
        let net = &handle(net, "network")?.0;
        check_len(input_len, net.input_dim(), "input")?;
        check_len(out_len, net.output_dim(), "out")?;
        let x = slice(input, input_len, "input")?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Failure(LcStatus::InvalidArgument, "non-finite input".into()));
        }
        slice_mut(out, out_len, "out")?.copy_from_slice(&net.logits(x));
        Ok(())
    })
}

/// # Safety
/// `net` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lc_network_free(net: *mut LcNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Anchor-point estimate from a row-major `rows × classes` buffer of softmax scores.
///
/// # Safety
/// `scores` must hold `rows * classes` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lc_estimate(
    scores: *const f64,
    rows: usize,
    classes: usize,
    mode: LcEstimatorMode,
    alpha: f64,
    row_normalize: bool,
    out: *mut *mut LcNoiseMatrix,
) -> LcStatus {
    guard(|| {
        let s = slice(scores, rows * classes, "scores")?;
        let m = DenseMatrix::from_row_major(rows, classes, s.to_vec())?;
        let config = EstimatorConfig {
            mode: match mode {
                LcEstimatorMode::Argmax => EstimatorMode::Argmax,
                LcEstimatorMode::Percentile => EstimatorMode::Percentile,
            },
            alpha,
            row_normalize,
        };
        emit(out, LcNoiseMatrix(estimate(&m, &config)?.matrix))
    })
}
