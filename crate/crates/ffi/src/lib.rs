//! C ABI over a loaded specqa checkpoint.
//!
//! Every fallible call returns a [`SpecqaStatus`]. On failure a message is
//! kept per thread and can be read with [`specqa_last_error_message`]; it
//! stays valid until the next call on the same thread. Panics never cross
//! the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use specqa::eval::rank_candidates;
use specqa::train::load_checkpoint;
use specqa::{Error, Model};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpecqaStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    /// Unreadable or malformed file.
    Input = 3,
    /// Shape or configuration problem.
    Config = 4,
    /// Numeric failure or empty input.
    Runtime = 5,
    Panic = 6,
}

/// Opaque model handle.
pub struct SpecqaModel {
    model: Model,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    let c = CString::new(text).expect("interior NULs replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> SpecqaStatus {
    match e.exit_code() {
        2 => SpecqaStatus::Input,
        3 => SpecqaStatus::Config,
        _ => SpecqaStatus::Runtime,
    }
}

struct Failure(SpecqaStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SpecqaStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SpecqaStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SpecqaStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(SpecqaStatus::NullArgument, format!("{what} is NULL"))
}

/// # Safety
/// `p` must be NULL or point to a NUL-terminated string.
unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(SpecqaStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

/// # Safety
/// `p` must be NULL or a handle from [`specqa_model_load`] not yet freed.
unsafe fn model_ref<'a>(p: *const SpecqaModel) -> Result<&'a Model, Failure> {
    p.as_ref().map(|m| &m.model).ok_or_else(|| null("model"))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn specqa_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL.
#[no_mangle]
pub extern "C" fn specqa_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Loads a checkpoint file. On success `*out` owns a handle that must be
/// released with [`specqa_model_free`]; on failure `*out` is set to NULL.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn specqa_model_load(path: *const c_char, out: *mut *mut SpecqaModel) -> SpecqaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = std::ptr::null_mut();
        let path = read_str(path, "path")?;
        let model = load_checkpoint(Path::new(path))?.to_model()?;
        *out = Box::into_raw(Box::new(SpecqaModel { model }));
        Ok(())
    })
}

/// Releases a handle. NULL is ignored.
///
/// # Safety
/// `model` must be NULL or a handle from [`specqa_model_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn specqa_model_free(model: *mut SpecqaModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Vocabulary size including the out-of-vocabulary row, or 0 for NULL.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn specqa_model_vocab_size(model: *const SpecqaModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.vocab().len())
}

/// Hidden size per LSTM direction, or 0 for NULL.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn specqa_model_hidden_size(model: *const SpecqaModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.hidden())
}

/// Relevance probability of `candidate` for `question`.
///
/// # Safety
/// `model` must be a live handle, the strings NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn specqa_probability(
    model: *const SpecqaModel,
    question: *const c_char,
    candidate: *const c_char,
    out: *mut f64,
) -> SpecqaStatus {
    guard(|| {
        let model = model_ref(model)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let q = read_str(question, "question")?;
        let c = read_str(candidate, "candidate")?;
        *out = model.probability(q, c)?;
        Ok(())
    })
}

/// Ranks `count` candidates. Writes, for each rank position `r`, the input
/// index into `out_order[r]` and its probability into `out_probability[r]`.
/// Both arrays must hold `count` elements.
///
/// # Safety
/// `candidates` must point to `count` NUL-terminated strings and the output
/// arrays to `count` writable elements each.
#[no_mangle]
pub unsafe extern "C" fn specqa_rank(
    model: *const SpecqaModel,
    question: *const c_char,
    candidates: *const *const c_char,
    count: usize,
    out_order: *mut usize,
    out_probability: *mut f64,
) -> SpecqaStatus {
    guard(|| {
        let model = model_ref(model)?;
        let q = read_str(question, "question")?;
        if count > 0 && (candidates.is_null() || out_order.is_null() || out_probability.is_null()) {
            return Err(null("candidates or output array"));
        }
        let texts = (0..count)
            .map(|i| read_str(*candidates.add(i), "candidate"))
            .collect::<Result<Vec<&str>, Failure>>()?;
        let ranked = rank_candidates(model, q, &texts)?;
        for (r, c) in ranked.iter().enumerate() {
            *out_order.add(r) = c.index;
            *out_probability.add(r) = c.probability;
        }
        Ok(())
    })
}
