//! C ABI over `lankit`.
//!
//! Objects cross the boundary as opaque handles created by `*_load` or
//! `*_new` functions and released with the matching `*_free`. Every fallible
//! call returns an [`LkStatus`]; on failure the message is kept per thread
//! and can be read with [`lk_last_error`]. Panics are caught and reported as
//! [`LkStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use lankit::lan::{corrupt, train_sample_mask, AttentionMask, LanModel, NoiseKind, SampleMaskConfig};
use lankit::nn::Checkpoint;
use lankit::{LanError, Tensor};

/// Status codes. 2, 3 and 4 match the command-line exit codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LkStatus {
    Ok = 0,
    /// Null pointer, bad UTF-8 or a buffer of the wrong length.
    InvalidArgument = 1,
    /// Configuration, contract or shape error.
    Config = 2,
    /// I/O or file-format error.
    Io = 3,
    /// Non-finite values or divergence.
    Numeric = 4,
    Panic = 5,
}

/// Noise distribution selector for [`LkSampleMaskConfig`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LkNoiseKind {
    /// Every component equals `noise_a`.
    Constant = 0,
    /// Draws from the pool passed alongside the config.
    Bootstrap = 1,
    /// Independent components in `[noise_a, noise_b)`.
    Uniform = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct LkSampleMaskConfig {
    pub beta: f32,
    pub learning_rate: f32,
    pub iterations: u64,
    pub noise_samples: usize,
    pub seed: u64,
    pub noise_kind: LkNoiseKind,
    pub noise_a: f32,
    pub noise_b: f32,
}

/// A trained classifier checkpoint.
pub struct LkClassifier(Checkpoint);

/// A trained attention network.
pub struct LkLan(LanModel);

/// An attention mask with values in `[0,1]`.
pub struct LkMask(AttentionMask);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(LkStatus, String);

impl From<LanError> for Failure {
    fn from(e: LanError) -> Self {
        let status = match e.exit_code() {
            3 => LkStatus::Io,
            4 => LkStatus::Numeric,
            _ => LkStatus::Config,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(LkStatus::InvalidArgument, msg.into())
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> LkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
            LkStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            LkStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(invalid("path is null"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid("path is not valid UTF-8"))?;
    Ok(PathBuf::from(s))
}

unsafe fn slice_arg<'a>(p: *const f32, len: usize, want: usize, what: &str) -> Result<&'a [f32], Failure> {
    if p.is_null() {
        return Err(invalid(format!("{what} is null")));
    }
    if len != want {
        return Err(invalid(format!("{what} has {len} values, expected {want}")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_slice<'a>(p: *mut f32, len: usize, want: usize, what: &str) -> Result<&'a mut [f32], Failure> {
    if p.is_null() {
        return Err(invalid(format!("{what} is null")));
    }
    if len != want {
        return Err(invalid(format!("{what} holds {len} values, expected {want}")));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| invalid(format!("{what} handle is null")))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(invalid("output pointer is null"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn tensor(shape: &[usize], data: &[f32]) -> Result<Tensor, Failure> {
    Ok(Tensor::new(shape.to_vec(), data.to_vec())?)
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn lk_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lk_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn lk_classifier_load(path: *const c_char, out: *mut *mut LkClassifier) -> LkStatus {
    guard(|| {
        let ckpt = Checkpoint::load(&path_arg(path)?)?;
        ckpt.spec.validate_classifier()?;
        put(out, LkClassifier(ckpt))
    })
}

/// # Safety
/// `h` must come from [`lk_classifier_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lk_classifier_free(h: *mut LkClassifier) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Number of input values, or 0 for a null handle.
///
/// # Safety
/// `h` must be null or a live classifier handle.
#[no_mangle]
pub unsafe extern "C" fn lk_classifier_input_len(h: *const LkClassifier) -> usize {
    h.as_ref().map_or(0, |c| c.0.spec.input_len())
}

/// Number of classes, or 0 for a null handle.
///
/// # Safety
/// `h` must be null or a live classifier handle.
#[no_mangle]
pub unsafe extern "C" fn lk_classifier_classes(h: *const LkClassifier) -> usize {
    h.as_ref().and_then(|c| c.0.output_dim().ok()).unwrap_or(0)
}

/// Class probabilities for one input.
///
/// # Safety
/// `input` must hold `input_len` floats and `probs` room for `probs_len`.
#[no_mangle]
pub unsafe extern "C" fn lk_classifier_predict(
    h: *const LkClassifier,
    input: *const f32,
    input_len: usize,
    probs: *mut f32,
    probs_len: usize,
) -> LkStatus {
    guard(|| {
        let c = &handle(h, "classifier")?.0;
        let x = tensor(&c.spec.input_shape, slice_arg(input, input_len, c.spec.input_len(), "input")?)?;
        let p = c.forward(&x)?;
        out_slice(probs, probs_len, p.len(), "probability buffer")?.copy_from_slice(p.data());
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn lk_lan_load(path: *const c_char, out: *mut *mut LkLan) -> LkStatus {
    guard(|| {
        let lan = LanModel::new(Checkpoint::load(&path_arg(path)?)?)?;
        put(out, LkLan(lan))
    })
}

/// # Safety
/// `h` must come from [`lk_lan_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lk_lan_free(h: *mut LkLan) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Mask the attention network assigns to one input.
///
/// # Safety
/// `input` must hold `input_len` floats and `out` be a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn lk_lan_mask(
    h: *const LkLan,
    input: *const f32,
    input_len: usize,
    out: *mut *mut LkMask,
) -> LkStatus {
    guard(|| {
        let lan = &handle(h, "attention network")?.0;
        let shape = lan.input_shape().to_vec();
        let want = shape.iter().product();
        let x = tensor(&shape, slice_arg(input, input_len, want, "input")?)?;
        put(out, LkMask(lan.mask(&x)?))
    })
}

/// Optimises a mask for one input against `classifier`. Bootstrap noise
/// draws from `pool`, `pool_count` inputs stored back to back; other noise
/// kinds accept a null pool.
///
/// # Safety
/// Buffers must hold the stated number of floats and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn lk_sample_mask(
    classifier: *const LkClassifier,
    input: *const f32,
    input_len: usize,
    pool: *const f32,
    pool_count: usize,
    config: *const LkSampleMaskConfig,
    out: *mut *mut LkMask,
) -> LkStatus {
    guard(|| {
        let c = &handle(classifier, "classifier")?.0;
        let cfg = handle(config, "config")?;
        let d = c.spec.input_len();
        let shape = &c.spec.input_shape;
        let x = tensor(shape, slice_arg(input, input_len, d, "input")?)?;
        let pool: Vec<Tensor> = if pool_count == 0 {
            Vec::new()
        } else {
            slice_arg(pool, pool_count * d, pool_count * d, "pool")?
                .chunks(d)
                .map(|chunk| tensor(shape, chunk))
                .collect::<Result<_, _>>()?
        };
        let noise = match cfg.noise_kind {
            LkNoiseKind::Constant => NoiseKind::Constant { value: cfg.noise_a },
            LkNoiseKind::Bootstrap => NoiseKind::Bootstrap,
            LkNoiseKind::Uniform => NoiseKind::Uniform {
                lo: cfg.noise_a,
                hi: cfg.noise_b,
            },
        };
        let settings = SampleMaskConfig {
            beta: cfg.beta,
            learning_rate: cfg.learning_rate,
            iterations: cfg.iterations,
            noise_samples: cfg.noise_samples,
            seed: cfg.seed,
            noise,
        };
        let outcome = train_sample_mask(c, &x, &pool, &settings)?;
        put(out, LkMask(outcome.mask))
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn lk_mask_load(path: *const c_char, out: *mut *mut LkMask) -> LkStatus {
    guard(|| put(out, LkMask(AttentionMask::load(&path_arg(path)?)?)))
}

/// # Safety
/// `h` must be a live mask handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn lk_mask_save(h: *const LkMask, path: *const c_char) -> LkStatus {
    guard(|| Ok(handle(h, "mask")?.0.save(&path_arg(path)?)?))
}

/// # Safety
/// `h` must be null or come from a mask-producing call, and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn lk_mask_free(h: *mut LkMask) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Number of mask values, or 0 for a null handle.
///
/// # Safety
/// `h` must be null or a live mask handle.
#[no_mangle]
pub unsafe extern "C" fn lk_mask_len(h: *const LkMask) -> usize {
    h.as_ref().map_or(0, |m| m.0.values().len())
}

/// Mean mask value, or NaN for a null handle.
///
/// # Safety
/// `h` must be null or a live mask handle.
#[no_mangle]
pub unsafe extern "C" fn lk_mask_mean(h: *const LkMask) -> f32 {
    h.as_ref().map_or(f32::NAN, |m| m.0.mean())
}

/// Copies the mask values, or with `importance` set, `1 - mask`.
///
/// # Safety
/// `dst` must have room for `len` floats.
#[no_mangle]
pub unsafe extern "C" fn lk_mask_copy(h: *const LkMask, importance: bool, dst: *mut f32, len: usize) -> LkStatus {
    guard(|| {
        let m = &handle(h, "mask")?.0;
        let values = if importance { m.importance() } else { m.values().clone() };
        out_slice(dst, len, values.len(), "destination")?.copy_from_slice(values.data());
        Ok(())
    })
}

/// `mask * eta + (1 - mask) * x` into `dst`; all buffers have the mask's length.
///
/// # Safety
/// Every buffer must hold `len` floats.
#[no_mangle]
pub unsafe extern "C" fn lk_corrupt(
    h: *const LkMask,
    x: *const f32,
    eta: *const f32,
    dst: *mut f32,
    len: usize,
) -> LkStatus {
    guard(|| {
        let m = &handle(h, "mask")?.0;
        let n = m.values().len();
        let shape = m.shape().to_vec();
        let xt = tensor(&shape, slice_arg(x, len, n, "x")?)?;
        let et = tensor(&shape, slice_arg(eta, len, n, "eta")?)?;
        let y = corrupt(&xt, m, &et)?;
        out_slice(dst, len, n, "destination")?.copy_from_slice(y.data());
        Ok(())
    })
}
