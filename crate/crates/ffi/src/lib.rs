//! C ABI over the dialectid library.
//!
//! Every fallible function returns a [`DidStatus`]. On failure a description
//! is available from [`did_last_error`] on the same thread until the next
//! call that fails. Strings returned to the caller are released with
//! [`did_string_free`]; model handles with their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use dialectid::charcnn::CnnArtifact;
use dialectid::corpus::preprocess;
use dialectid::ensemble::from_kernel_prediction;
use dialectid::gradcam::attribute_text;
use dialectid::kernel_models::{predict_multiclass, KernelModelArtifact};
use dialectid::strkernel::{gram_matrix, kernel_value, GramOptions, KernelSpec, TextCollection};
use dialectid::{Error, ErrorKind};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DidStatus {
    Ok = 0,
    Usage = 1,
    Data = 2,
    Numerical = 3,
    NullPointer = 4,
    InvalidUtf8 = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// Trained string-kernel classifier (KRR or SVM).
pub struct DidKernelModel {
    artifact: KernelModelArtifact,
    names: Vec<CString>,
}

/// Trained character CNN.
pub struct DidCnnModel {
    artifact: CnnArtifact,
    names: Vec<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn fail(status: DidStatus, msg: &str) -> DidStatus {
    set_error(msg);
    status
}

fn from_error(e: &Error) -> DidStatus {
    let status = match e.kind() {
        ErrorKind::Usage => DidStatus::Usage,
        ErrorKind::Data => DidStatus::Data,
        ErrorKind::Numerical => DidStatus::Numerical,
    };
    fail(status, &format!("error[{}]: {e}", e.tag()))
}

/// Runs `f`, turning panics into [`DidStatus::Panic`].
fn guard(f: impl FnOnce() -> DidStatus) -> DidStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(DidStatus::Panic, "internal panic"),
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, DidStatus> {
    if p.is_null() {
        return Err(fail(DidStatus::NullPointer, &format!("{what} is NULL")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(DidStatus::InvalidUtf8, &format!("{what} is not valid UTF-8")))
}

fn class_names(names: &[String]) -> Vec<CString> {
    names.iter().map(|n| CString::new(n.as_str()).unwrap_or_default()).collect()
}

macro_rules! try_ffi {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

/// Message of the last failure on this thread; empty when none. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn did_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn did_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Number of distinct character `n`-grams shared by two texts, optionally
/// cosine-normalized. Texts are used as given, without preprocessing.
///
/// # Safety
/// `x` and `y` must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn did_kernel_value(
    x: *const c_char,
    y: *const c_char,
    n: usize,
    normalized: bool,
    out: *mut f64,
) -> DidStatus {
    guard(|| {
        let x = try_ffi!(text(x, "x"));
        let y = try_ffi!(text(y, "y"));
        if out.is_null() {
            return fail(DidStatus::NullPointer, "out is NULL");
        }
        let spec = match KernelSpec::new(n, normalized) {
            Ok(s) => s,
            Err(e) => return fail(DidStatus::Usage, &format!("error[{}]: {e}", e.tag())),
        };
        *out = kernel_value(x, y, spec);
        DidStatus::Ok
    })
}

/// Canonical text form used by every model (composed Unicode, lowercase,
/// single spaces). The result is freed with [`did_string_free`].
///
/// # Safety
/// `input` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn did_preprocess(input: *const c_char, out: *mut *mut c_char) -> DidStatus {
    guard(|| {
        let input = try_ffi!(text(input, "input"));
        if out.is_null() {
            return fail(DidStatus::NullPointer, "out is NULL");
        }
        *out = CString::new(preprocess(input)).map_or(ptr::null_mut(), CString::into_raw);
        DidStatus::Ok
    })
}

/// Loads a kernel model saved with its training texts.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn did_kernel_model_load(path: *const c_char, out: *mut *mut DidKernelModel) -> DidStatus {
    guard(|| {
        let path = try_ffi!(text(path, "path"));
        if out.is_null() {
            return fail(DidStatus::NullPointer, "out is NULL");
        }
        let artifact = match KernelModelArtifact::load(Path::new(path)) {
            Ok(a) => a,
            Err(e) => return from_error(&e),
        };
        if artifact.train_texts.is_none() {
            return fail(DidStatus::Data, "model was saved without its training texts");
        }
        let names = class_names(&artifact.class_names);
        *out = Box::into_raw(Box::new(DidKernelModel { artifact, names }));
        DidStatus::Ok
    })
}

/// # Safety
/// `model` must come from [`did_kernel_model_load`] or be NULL.
#[no_mangle]
pub unsafe extern "C" fn did_kernel_model_free(model: *mut DidKernelModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of classes, or 0 for NULL.
///
/// # Safety
/// `model` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn did_kernel_model_classes(model: *const DidKernelModel) -> usize {
    model.as_ref().map_or(0, |m| m.names.len())
}

/// Name of class `index`, owned by the model; NULL when out of range.
///
/// # Safety
/// `model` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn did_kernel_model_class_name(model: *const DidKernelModel, index: usize) -> *const c_char {
    model
        .as_ref()
        .and_then(|m| m.names.get(index))
        .map_or(ptr::null(), |n| n.as_ptr())
}

/// Classifies one raw text. Writes the class index to `label` and, when
/// `probs` is not NULL, `probs_len` calibrated probabilities.
///
/// # Safety
/// `model` must be live, `input` NUL-terminated, `label` writable and `probs`
/// NULL or writable for `probs_len` values.
#[no_mangle]
pub unsafe extern "C" fn did_kernel_model_predict(
    model: *const DidKernelModel,
    input: *const c_char,
    label: *mut usize,
    probs: *mut f64,
    probs_len: usize,
) -> DidStatus {
    guard(|| {
        let Some(m) = model.as_ref() else {
            return fail(DidStatus::NullPointer, "model is NULL");
        };
        let input = try_ffi!(text(input, "input"));
        if label.is_null() {
            return fail(DidStatus::NullPointer, "label is NULL");
        }
        let k = m.names.len();
        if !probs.is_null() && probs_len < k {
            return fail(DidStatus::BufferTooSmall, &format!("probs holds {probs_len} values, {k} needed"));
        }
        let art = &m.artifact;
        let clean = preprocess(input);
        let train = art.train_texts.as_ref().expect("checked at load");
        let result = TextCollection::new(art.model.train_ids.clone(), train.iter().map(String::as_str).collect())
            .and_then(|cols| {
                let rows = TextCollection::new(vec!["input".into()], vec![clean.as_str()])?;
                gram_matrix(&rows, &cols, art.model.kernel, &GramOptions::default())
            })
            .and_then(|kx| predict_multiclass(&art.model, &kx))
            .and_then(|p| from_kernel_prediction("ffi", &["input".into()], &p, art.model.scheme));
        match result {
            Ok(mut preds) => {
                let p = preds.remove(0);
                *label = p.hard_label;
                if !probs.is_null() {
                    std::slice::from_raw_parts_mut(probs, k).copy_from_slice(&p.probs);
                }
                DidStatus::Ok
            }
            Err(e) => from_error(&e),
        }
    })
}

/// Loads a CNN model file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn did_cnn_load(path: *const c_char, out: *mut *mut DidCnnModel) -> DidStatus {
    guard(|| {
        let path = try_ffi!(text(path, "path"));
        if out.is_null() {
            return fail(DidStatus::NullPointer, "out is NULL");
        }
        match CnnArtifact::load(Path::new(path)) {
            Ok(artifact) => {
                let names = class_names(&artifact.class_names);
                *out = Box::into_raw(Box::new(DidCnnModel { artifact, names }));
                DidStatus::Ok
            }
            Err(e) => from_error(&e),
        }
    })
}

/// # Safety
/// `model` must come from [`did_cnn_load`] or be NULL.
#[no_mangle]
pub unsafe extern "C" fn did_cnn_free(model: *mut DidCnnModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of classes, or 0 for NULL.
///
/// # Safety
/// `model` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn did_cnn_classes(model: *const DidCnnModel) -> usize {
    model.as_ref().map_or(0, |m| m.names.len())
}

/// Name of class `index`, owned by the model; NULL when out of range.
///
/// # Safety
/// `model` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn did_cnn_class_name(model: *const DidCnnModel, index: usize) -> *const c_char {
    model
        .as_ref()
        .and_then(|m| m.names.get(index))
        .map_or(ptr::null(), |n| n.as_ptr())
}

/// Classifies one raw text with the CNN.
///
/// # Safety
/// As for [`did_kernel_model_predict`].
#[no_mangle]
pub unsafe extern "C" fn did_cnn_predict(
    model: *const DidCnnModel,
    input: *const c_char,
    label: *mut usize,
    probs: *mut f32,
    probs_len: usize,
) -> DidStatus {
    guard(|| {
        let Some(m) = model.as_ref() else {
            return fail(DidStatus::NullPointer, "model is NULL");
        };
        let input = try_ffi!(text(input, "input"));
        if label.is_null() {
            return fail(DidStatus::NullPointer, "label is NULL");
        }
        let k = m.names.len();
        if !probs.is_null() && probs_len < k {
            return fail(DidStatus::BufferTooSmall, &format!("probs holds {probs_len} values, {k} needed"));
        }
        let p = m.artifact.predict_proba(&[preprocess(input)]).remove(0);
        *label = dialectid::charcnn::argmax(&p);
        if !probs.is_null() {
            std::slice::from_raw_parts_mut(probs, k).copy_from_slice(&p);
        }
        DidStatus::Ok
    })
}

/// Grad-CAM importance in `[0, 1]` for each character of the preprocessed
/// text that fits the network input. `written` receives the number of
/// values; when `capacity` is too small it receives the required size and
/// [`DidStatus::BufferTooSmall`] is returned.
///
/// # Safety
/// `model` must be live, `input` NUL-terminated, `written` writable and
/// `importance` writable for `capacity` values (or NULL with capacity 0).
#[no_mangle]
pub unsafe extern "C" fn did_cnn_gradcam(
    model: *const DidCnnModel,
    input: *const c_char,
    target_class: usize,
    importance: *mut f32,
    capacity: usize,
    written: *mut usize,
) -> DidStatus {
    guard(|| {
        let Some(m) = model.as_ref() else {
            return fail(DidStatus::NullPointer, "model is NULL");
        };
        let input = try_ffi!(text(input, "input"));
        if written.is_null() {
            return fail(DidStatus::NullPointer, "written is NULL");
        }
        let attr = match attribute_text(&m.artifact, &preprocess(input), target_class, "input") {
            Ok(a) => a,
            Err(e) => return from_error(&e),
        };
        let len = attr.importance.len();
        *written = len;
        if capacity < len || (importance.is_null() && len > 0) {
            return fail(DidStatus::BufferTooSmall, &format!("importance holds {capacity} values, {len} needed"));
        }
        if len > 0 {
            std::slice::from_raw_parts_mut(importance, len).copy_from_slice(&attr.importance);
        }
        DidStatus::Ok
    })
}
