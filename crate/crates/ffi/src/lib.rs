//! C ABI over `csod-core`.
//!
//! Datasets and selection results are opaque handles owned by the library
//! and released with their `_free` functions. Every fallible call returns a
//! [`CsodStatus`]; on failure a message is available from
//! [`csod_last_error_message`] until the next failing call on the same thread.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use csod_core::metrics::{coverage_objective, kl_divergence};
use csod_core::{cosine, default_lambda, run, CandidateMode, Dataset, Error, Method, SelectionConfig, SelectionResult};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsodStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Validation = 5,
    RetryExhausted = 6,
    Panic = 7,
}

/// Loaded dataset handle.
pub struct CsodDataset(Dataset);

/// Selection result handle.
pub struct CsodSelection(SelectionResult);

/// Options for [`csod_select`]. `lambda` NaN selects the per-count default;
/// `presample_per_class` 0 disables pre-sampling.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CsodSelectOptions {
    pub target_count: usize,
    pub lambda: f64,
    pub seed: u64,
    pub presample_per_class: usize,
    pub objectwise: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(err: &Error) -> CsodStatus {
    match err {
        Error::Io(_) => CsodStatus::Io,
        Error::Json(_) | Error::Format(_) => CsodStatus::Format,
        Error::RetryBudgetExhausted { .. } => CsodStatus::RetryExhausted,
        Error::InvalidConfig(_) | Error::DimensionMismatch(..) | Error::InvalidDistribution(_) => {
            CsodStatus::InvalidArgument
        }
        _ => CsodStatus::Validation,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (CsodStatus, String)>) -> CsodStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CsodStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside csod");
            CsodStatus::Panic
        }
    }
}

fn core_err(e: Error) -> (CsodStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (CsodStatus, String) {
    (CsodStatus::NullPointer, format!("{what} is null"))
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (CsodStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (CsodStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn c_slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], (CsodStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

/// Message for the most recent failure on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn csod_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

#[no_mangle]
pub unsafe extern "C" fn csod_dataset_load(
    manifest_path: *const c_char,
    features_path: *const c_char,
    out: *mut *mut CsodDataset,
) -> CsodStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let m = c_str(manifest_path, "manifest_path")?;
        let f = c_str(features_path, "features_path")?;
        let ds = Dataset::load(m, f).map_err(core_err)?;
        *out = Box::into_raw(Box::new(CsodDataset(ds)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn csod_dataset_free(dataset: *mut CsodDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

#[no_mangle]
pub unsafe extern "C" fn csod_dataset_num_images(dataset: *const CsodDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.0.num_images())
}

#[no_mangle]
pub unsafe extern "C" fn csod_dataset_num_objects(dataset: *const CsodDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.0.num_objects())
}

#[no_mangle]
pub unsafe extern "C" fn csod_dataset_num_classes(dataset: *const CsodDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.0.num_classes())
}

#[no_mangle]
pub unsafe extern "C" fn csod_dataset_dim(dataset: *const CsodDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.0.dim())
}

#[no_mangle]
pub extern "C" fn csod_default_lambda(target_count: usize) -> f64 {
    default_lambda(target_count)
}

/// Runs `method` (e.g. `"csod"`, `"herding"`). `excluded` may be null when
/// `num_excluded` is 0.
#[no_mangle]
pub unsafe extern "C" fn csod_select(
    dataset: *const CsodDataset,
    method: *const c_char,
    options: *const CsodSelectOptions,
    excluded: *const usize,
    num_excluded: usize,
    out: *mut *mut CsodSelection,
) -> CsodStatus {
    guard(|| {
        let ds = dataset.as_ref().ok_or_else(|| null("dataset"))?;
        let opts = options.as_ref().ok_or_else(|| null("options"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let method: Method = c_str(method, "method")?
            .parse()
            .map_err(|e: String| (CsodStatus::InvalidArgument, e))?;
        let mut config = SelectionConfig::new(opts.target_count).with_seed(opts.seed);
        if !opts.lambda.is_nan() {
            config = config.with_lambda(opts.lambda);
        }
        if opts.presample_per_class > 0 {
            config.presample_per_class = Some(opts.presample_per_class);
        }
        if opts.objectwise {
            config.candidate_mode = CandidateMode::Objectwise;
        }
        config
            .excluded_image_ids
            .extend(c_slice(excluded, num_excluded, "excluded")?.iter().copied());
        let method = match (method, opts.objectwise) {
            (Method::Csod, true) => Method::CsodObjectwise,
            (m, _) => m,
        };
        let result = run(&ds.0, method, &config).map_err(core_err)?;
        *out = Box::into_raw(Box::new(CsodSelection(result)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn csod_selection_free(selection: *mut CsodSelection) {
    if !selection.is_null() {
        drop(Box::from_raw(selection));
    }
}

#[no_mangle]
pub unsafe extern "C" fn csod_selection_len(selection: *const CsodSelection) -> usize {
    selection.as_ref().map_or(0, |s| s.0.selected_image_ids.len())
}

#[no_mangle]
pub unsafe extern "C" fn csod_selection_is_partial(selection: *const CsodSelection) -> bool {
    selection.as_ref().is_some_and(|s| s.0.is_partial())
}

/// Copies up to `capacity` selected ids, in pick order, into `buf`; returns
/// the number copied.
#[no_mangle]
pub unsafe extern "C" fn csod_selection_ids(
    selection: *const CsodSelection,
    buf: *mut usize,
    capacity: usize,
) -> usize {
    let Some(sel) = selection.as_ref() else { return 0 };
    if buf.is_null() {
        return 0;
    }
    let ids = &sel.0.selected_image_ids;
    let n = ids.len().min(capacity);
    ptr::copy_nonoverlapping(ids.as_ptr(), buf, n);
    n
}

/// Result JSON (same bytes as the CLI writes). Free with [`csod_string_free`].
#[no_mangle]
pub unsafe extern "C" fn csod_selection_to_json(selection: *const CsodSelection, out: *mut *mut c_char) -> CsodStatus {
    guard(|| {
        let sel = selection.as_ref().ok_or_else(|| null("selection"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let json = sel.0.to_json().map_err(core_err)?;
        let s = CString::new(json).map_err(|e| (CsodStatus::Format, e.to_string()))?;
        *out = s.into_raw();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn csod_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[no_mangle]
pub unsafe extern "C" fn csod_cosine(a: *const f32, b: *const f32, len: usize, out: *mut f64) -> CsodStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let a = c_slice(a, len, "a")?;
        let b = c_slice(b, len, "b")?;
        *out = cosine(a, b).map_err(core_err)?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn csod_kl_divergence(p: *const f64, q: *const f64, len: usize, out: *mut f64) -> CsodStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let p = c_slice(p, len, "p")?;
        let q = c_slice(q, len, "q")?;
        *out = kl_divergence(p, q).map_err(core_err)?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn csod_coverage_objective(
    dataset: *const CsodDataset,
    image_ids: *const usize,
    num_ids: usize,
    out: *mut f64,
) -> CsodStatus {
    guard(|| {
        let ds = dataset.as_ref().ok_or_else(|| null("dataset"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let ids = c_slice(image_ids, num_ids, "image_ids")?;
        *out = coverage_objective(ids, &ds.0).map_err(core_err)?;
        Ok(())
    })
}
