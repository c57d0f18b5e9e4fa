//! C ABI over the `cfm` library.
//!
//! Every fallible function returns a [`CfmStatus`]; on failure a description is
//! available from [`cfm_last_error_message`] on the same thread. Buffers are
//! caller-owned. Error-network parameters live behind the opaque [`CfmErrNet`]
//! handle, released with [`cfm_errnet_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use cfm::conformal::{max_false_negatives, threshold_from_scores, FnrCounts, Threshold};
use cfm::errnet::{decode_params, load_params, predict, ErrNetParams, FeatureMap};
use cfm::eval::{auroc, fpr95};
use cfm::Error;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CfmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    Format = 4,
    Io = 5,
    Undefined = 6,
    Numeric = 7,
    Panic = 8,
}

/// Kind of a calibrated threshold.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CfmThresholdKind {
    /// Flag pixels with `score >= value`.
    At = 0,
    /// Nothing is flagged.
    Unconstrained = 1,
    /// Everything is flagged.
    RejectAll = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CfmThreshold {
    pub kind: CfmThresholdKind,
    /// Meaningful only for `At`.
    pub value: f64,
}

impl From<Threshold> for CfmThreshold {
    fn from(t: Threshold) -> Self {
        match t {
            Threshold::At(v) => CfmThreshold {
                kind: CfmThresholdKind::At,
                value: v,
            },
            Threshold::Unconstrained => CfmThreshold {
                kind: CfmThresholdKind::Unconstrained,
                value: f64::INFINITY,
            },
            Threshold::RejectAll => CfmThreshold {
                kind: CfmThresholdKind::RejectAll,
                value: f64::NEG_INFINITY,
            },
        }
    }
}

impl CfmThreshold {
    fn to_threshold(self) -> Result<Threshold, Error> {
        match self.kind {
            CfmThresholdKind::At if self.value.is_finite() => Ok(Threshold::At(self.value)),
            CfmThresholdKind::At => Err(Error::InvalidArgument("threshold value must be finite".into())),
            CfmThresholdKind::Unconstrained => Ok(Threshold::Unconstrained),
            CfmThresholdKind::RejectAll => Ok(Threshold::RejectAll),
        }
    }
}

/// Opaque error-network parameters.
pub struct CfmErrNet {
    params: ErrNetParams,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
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

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CfmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CfmStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_last_error(format!("{what} is NULL"));
            CfmStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            let status = match &e {
                Error::Io { .. } => CfmStatus::Io,
                Error::Format { .. } => CfmStatus::Format,
                Error::Shape(_) => CfmStatus::Shape,
                Error::InvalidArgument(_) => CfmStatus::InvalidArgument,
                Error::Undefined(_) => CfmStatus::Undefined,
                Error::Numeric(_) => CfmStatus::Numeric,
            };
            set_last_error(e.to_string());
            status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            CfmStatus::Panic
        }
    }
}

/// Slice from a caller buffer; a NULL pointer is allowed only for `len == 0`.
unsafe fn view<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn view_mut<'a, T>(p: *mut T, len: usize, what: &'static str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    // SAFETY: non-null pointers to outputs are required to be valid and aligned.
    unsafe { p.as_mut() }.ok_or(Failure::Null(what))
}

/// Message for the last failed call on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cfm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cfm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Largest admissible number of calibration false negatives for `n_positives`.
///
/// # Safety
/// `out` must be NULL or point to writable memory.
#[no_mangle]
pub unsafe extern "C" fn cfm_max_false_negatives(alpha: f64, n_positives: u64, out_k: *mut u64) -> CfmStatus {
    guard(|| {
        *out(out_k, "out_k")? = max_false_negatives(alpha, n_positives)?;
        Ok(())
    })
}

/// Calibrates from pooled per-pixel scores and binary oracle labels (1 = failure).
///
/// # Safety
/// `scores` and `labels` must each point to `n` readable elements.
#[no_mangle]
pub unsafe extern "C" fn cfm_calibrate(
    scores: *const f32,
    labels: *const u8,
    n: usize,
    alpha: f64,
    out_threshold: *mut CfmThreshold,
) -> CfmStatus {
    guard(|| {
        let s = view(scores, n, "scores")?;
        let l = view(labels, n, "labels")?;
        let mut positives = Vec::new();
        for (&v, &m) in s.iter().zip(l) {
            match m {
                0 => {}
                1 => {
                    if !v.is_finite() {
                        return Err(Error::InvalidArgument("scores must be finite".into()).into());
                    }
                    positives.push(f64::from(v));
                }
                other => return Err(Error::InvalidArgument(format!("label {other} is not 0 or 1")).into()),
            }
        }
        *out(out_threshold, "out_threshold")? = threshold_from_scores(&mut positives, alpha)?.into();
        Ok(())
    })
}

/// Writes `1` where the threshold flags the score, else `0`.
///
/// # Safety
/// `scores` must hold `n` readable and `out_mask` `n` writable elements.
#[no_mangle]
pub unsafe extern "C" fn cfm_apply_mask(
    scores: *const f32,
    n: usize,
    threshold: CfmThreshold,
    out_mask: *mut u8,
) -> CfmStatus {
    guard(|| {
        let s = view(scores, n, "scores")?;
        let m = view_mut(out_mask, n, "out_mask")?;
        let tau = threshold.to_threshold()?;
        for (o, &v) in m.iter_mut().zip(s) {
            *o = u8::from(tau.flags(f64::from(v)));
        }
        Ok(())
    })
}

/// Pooled false-negative rate of `predicted` against `oracle`.
///
/// # Safety
/// Both arrays must hold `n` readable elements.
#[no_mangle]
pub unsafe extern "C" fn cfm_fnr(oracle: *const u8, predicted: *const u8, n: usize, out_rate: *mut f64) -> CfmStatus {
    guard(|| {
        let mut c = FnrCounts::default();
        c.add(view(oracle, n, "oracle")?, view(predicted, n, "predicted")?);
        *out(out_rate, "out_rate")? = c.rate()?;
        Ok(())
    })
}

/// Exact AUROC with tie correction; positives are label 1.
///
/// # Safety
/// `scores` and `labels` must each hold `n` readable elements.
#[no_mangle]
pub unsafe extern "C" fn cfm_auroc(scores: *const f64, labels: *const u8, n: usize, out_auroc: *mut f64) -> CfmStatus {
    guard(|| {
        *out(out_auroc, "out_auroc")? = auroc(view(scores, n, "scores")?, view(labels, n, "labels")?)?;
        Ok(())
    })
}

/// False-positive rate at 95% true-positive rate.
///
/// # Safety
/// `scores` and `labels` must each hold `n` readable elements.
#[no_mangle]
pub unsafe extern "C" fn cfm_fpr95(scores: *const f64, labels: *const u8, n: usize, out_fpr: *mut f64) -> CfmStatus {
    guard(|| {
        *out(out_fpr, "out_fpr")? = fpr95(view(scores, n, "scores")?, view(labels, n, "labels")?)?;
        Ok(())
    })
}

fn boxed(params: ErrNetParams, out_handle: *mut *mut CfmErrNet) -> Result<(), Failure> {
    *out(out_handle, "out_handle")? = Box::into_raw(Box::new(CfmErrNet { params }));
    Ok(())
}

/// Loads an error-network container from a file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out_handle` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cfm_errnet_load(path: *const c_char, out_handle: *mut *mut CfmErrNet) -> CfmStatus {
    guard(|| {
        if path.is_null() {
            return Err(Failure::Null("path"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Error::InvalidArgument("path is not UTF-8".into()))?;
        boxed(load_params(path)?, out_handle)
    })
}

/// Decodes an error-network container held in memory.
///
/// # Safety
/// `bytes` must hold `len` readable bytes; `out_handle` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cfm_errnet_from_bytes(
    bytes: *const u8,
    len: usize,
    out_handle: *mut *mut CfmErrNet,
) -> CfmStatus {
    guard(|| boxed(decode_params(view(bytes, len, "bytes")?)?, out_handle))
}

/// Releases a handle. NULL is ignored.
///
/// # Safety
/// `handle` must come from a `cfm_errnet_*` constructor and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cfm_errnet_free(handle: *mut CfmErrNet) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Architecture of a loaded network.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CfmErrNetInfo {
    pub n_blocks: u32,
    pub width: u32,
    pub in_channels: u32,
    pub scale: u32,
}

/// # Safety
/// `handle` must be a live handle; `out_info` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cfm_errnet_info(handle: *const CfmErrNet, out_info: *mut CfmErrNetInfo) -> CfmStatus {
    guard(|| {
        let net = handle.as_ref().ok_or(Failure::Null("handle"))?;
        let a = net.params.arch;
        *out(out_info, "out_info")? = CfmErrNetInfo {
            n_blocks: a.n_blocks as u32,
            width: a.width as u32,
            in_channels: a.in_channels as u32,
            scale: a.scale.get() as u32,
        };
        Ok(())
    })
}

/// Predicts the HR error-score map from LR features laid out `[h][w][channels]`.
/// `out_scores` receives `(scale*h) * (scale*w)` values, row-major.
///
/// # Safety
/// `features` must hold `h * w * channels` readable values and `out_scores`
/// `out_len` writable ones; `handle` must be live.
#[no_mangle]
pub unsafe extern "C" fn cfm_errnet_predict(
    handle: *const CfmErrNet,
    features: *const f32,
    h: usize,
    w: usize,
    channels: usize,
    out_scores: *mut f32,
    out_len: usize,
) -> CfmStatus {
    guard(|| {
        let net = handle.as_ref().ok_or(Failure::Null("handle"))?;
        let n = h
            .checked_mul(w)
            .and_then(|v| v.checked_mul(channels))
            .ok_or_else(|| Error::InvalidArgument("feature dims overflow".into()))?;
        let feat = FeatureMap::new(h, w, channels, view(features, n, "features")?.to_vec())?;
        let s = net.params.arch.scale.get();
        let need = (h * s) * (w * s);
        if out_len != need {
            return Err(Error::Shape(format!("output buffer holds {out_len} values, need {need}")).into());
        }
        let scores = predict(&net.params, &feat)?;
        view_mut(out_scores, out_len, "out_scores")?.copy_from_slice(scores.data());
        Ok(())
    })
}
