//! C ABI for the kglp toolkit.
//!
//! Every fallible function returns a [`KglpStatus`]; on failure the message
//! is available from [`kglp_last_error_message`] on the same thread. Strings
//! handed out by this library must be released with [`kglp_string_free`].
//! Handles are opaque and released with their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use kglp::assemble::similarity::{default_similarity, SimilarityProvider};
use kglp::assemble::Assembler;
use kglp::config::RunConfig;
use kglp::pipeline::{make_provider, Dataset};
use kglp::samples::IncompletePattern;
use kglp::text::{shorten_description, WhitespaceTokenizer};
use kglp::train::loss::{loss_stage1, loss_stage23};
use kglp::train::{checkpoint, lr_at, LrSchedule, Model};
use kglp::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KglpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    InvalidArgument = 5,
    NotFound = 6,
    Internal = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let message = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(message).ok());
}

fn classify(e: &Error) -> KglpStatus {
    match e {
        Error::Io { .. } => KglpStatus::Io,
        Error::Parse { .. } | Error::Json(_) | Error::Checkpoint(_) => KglpStatus::Parse,
        Error::UnknownEntity(_) | Error::UnindexedLabel(_) => KglpStatus::NotFound,
        Error::Stage { source, .. } => classify(source),
        _ => KglpStatus::InvalidArgument,
    }
}

fn fail(status: KglpStatus, message: impl Into<String>) -> KglpStatus {
    set_error(message);
    status
}

fn from_error(e: Error) -> KglpStatus {
    fail(classify(&e), e.to_string())
}

/// Run `f`, turning panics into `Internal`.
fn guard(f: impl FnOnce() -> KglpStatus) -> KglpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => fail(KglpStatus::Internal, "internal panic"),
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, KglpStatus> {
    if p.is_null() {
        return Err(fail(KglpStatus::NullPointer, format!("`{name}` is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(KglpStatus::InvalidUtf8, format!("`{name}` is not valid UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], KglpStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(KglpStatus::NullPointer, format!("`{name}` is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn put<T>(out: *mut T, value: T) -> KglpStatus {
    if out.is_null() {
        return fail(KglpStatus::NullPointer, "output pointer is null");
    }
    out.write(value);
    KglpStatus::Ok
}

unsafe fn put_string(out: *mut *mut c_char, s: &str) -> KglpStatus {
    match CString::new(s) {
        Ok(c) => put(out, c.into_raw()),
        Err(_) => fail(KglpStatus::Internal, "string contains a NUL byte"),
    }
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(status) => return status,
        }
    };
}

/// Message of the last failure on this thread, or null. Owned by the library;
/// valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn kglp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must be null or a string returned by this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn kglp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Description prefix before the first `;`.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kglp_shorten_description(text: *const c_char, out: *mut *mut c_char) -> KglpStatus {
    guard(|| {
        let text = tri!(str_arg(text, "text"));
        put_string(out, shorten_description(text))
    })
}

/// Learning rate at `step`; 0 when `d_model` or `warmup` is 0.
#[no_mangle]
pub extern "C" fn kglp_lr_at(step: u64, d_model: u64, warmup: u64) -> f64 {
    if d_model == 0 || warmup == 0 {
        return 0.0;
    }
    lr_at(step, &LrSchedule::new(d_model as usize, warmup as usize))
}

/// # Safety
/// `predicted` and `truth` must point to `len` elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kglp_loss_stage1(
    predicted: *const f64,
    truth: *const u8,
    len: usize,
    alpha: f64,
    out: *mut f64,
) -> KglpStatus {
    guard(|| {
        let p = tri!(slice_arg(predicted, len, "predicted"));
        let y = tri!(slice_arg(truth, len, "truth"));
        match loss_stage1(p, y, alpha) {
            Ok(v) => put(out, v),
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `predicted` and `truth` must point to `len` elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kglp_loss_stage23(
    predicted: *const f64,
    truth: *const u8,
    len: usize,
    alpha: f64,
    threshold: f64,
    out: *mut f64,
) -> KglpStatus {
    guard(|| {
        let p = tri!(slice_arg(predicted, len, "predicted"));
        let y = tri!(slice_arg(truth, len, "truth"));
        match loss_stage23(p, y, alpha, threshold) {
            Ok(v) => put(out, v),
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `scores` must point to `n_scores` values and `true_set` to `n_true` indices.
#[no_mangle]
pub unsafe extern "C" fn kglp_precision_at_k(
    scores: *const f64,
    n_scores: usize,
    true_set: *const usize,
    n_true: usize,
    k: usize,
    out: *mut f64,
) -> KglpStatus {
    guard(|| {
        let s = tri!(slice_arg(scores, n_scores, "scores"));
        let t = tri!(slice_arg(true_set, n_true, "true_set"));
        match kglp::metrics::precision_at_k(s, t, k) {
            Ok(v) => put(out, v),
            Err(e) => from_error(e),
        }
    })
}

/// Character-trigram cosine similarity of two strings.
///
/// # Safety
/// `a` and `b` must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kglp_default_similarity(a: *const c_char, b: *const c_char, out: *mut f64) -> KglpStatus {
    guard(|| {
        let a = tri!(str_arg(a, "a"));
        let b = tri!(str_arg(b, "b"));
        put(out, default_similarity(a, b))
    })
}

/// Graph, descriptions and assembly settings loaded from a run config.
pub struct KglpAssembler {
    data: Dataset,
    tokenizer: WhitespaceTokenizer,
    provider: Box<dyn SimilarityProvider>,
    config: RunConfig,
}

/// Build an assembler from a TOML config. Relative paths resolve against
/// `base_dir`, or the working directory when it is null.
///
/// # Safety
/// String arguments must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kglp_assembler_new(
    config_toml: *const c_char,
    base_dir: *const c_char,
    out: *mut *mut KglpAssembler,
) -> KglpStatus {
    guard(|| {
        let toml = tri!(str_arg(config_toml, "config_toml"));
        let dir = if base_dir.is_null() {
            "."
        } else {
            tri!(str_arg(base_dir, "base_dir"))
        };
        let built = RunConfig::resolve(toml, &[], Path::new(dir)).and_then(|config| {
            let data = Dataset::load(&config)?;
            let provider = make_provider(&config)?;
            Ok(KglpAssembler {
                tokenizer: data.tokenizer(),
                data,
                provider,
                config,
            })
        });
        match built {
            Ok(a) => put(out, Box::into_raw(Box::new(a))),
            Err(e) => from_error(e),
        }
    })
}

/// Assemble the input for one pattern. `masked_side` is `"head"` or `"tail"`.
///
/// # Safety
/// `handle` must come from [`kglp_assembler_new`]; strings must be
/// NUL-terminated; `out_text` must be writable, `out_tokens` may be null.
#[no_mangle]
pub unsafe extern "C" fn kglp_assembler_assemble(
    handle: *const KglpAssembler,
    masked_side: *const c_char,
    relation: *const c_char,
    given: *const c_char,
    out_text: *mut *mut c_char,
    out_tokens: *mut usize,
) -> KglpStatus {
    guard(|| {
        let Some(a) = handle.as_ref() else {
            return fail(KglpStatus::NullPointer, "`handle` is null");
        };
        let side = tri!(str_arg(masked_side, "masked_side"));
        let relation = tri!(str_arg(relation, "relation"));
        let given = tri!(str_arg(given, "given"));
        let symbols = &a.data.symbols;
        let Some(r) = symbols.relation_id(relation) else {
            return fail(KglpStatus::NotFound, format!("unknown relation `{relation}`"));
        };
        let Some(g) = symbols.entity_id(given) else {
            return fail(KglpStatus::NotFound, format!("unknown entity `{given}`"));
        };
        let pattern = match side {
            "head" => IncompletePattern::head_masked(r, g),
            "tail" => IncompletePattern::tail_masked(g, r),
            other => {
                return fail(KglpStatus::InvalidArgument, format!("masked_side `{other}` is not head or tail"))
            }
        };
        let assembler = Assembler {
            symbols,
            graph: &a.data.graph,
            store: &a.data.store,
            tokenizer: &a.tokenizer,
            provider: a.provider.as_ref(),
            config: a.config.assembler(),
        };
        match assembler.assemble_pattern(&pattern) {
            Ok(input) => {
                if !out_tokens.is_null() {
                    out_tokens.write(input.token_count);
                }
                put_string(out_text, &input.text)
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `handle` must be null or come from [`kglp_assembler_new`], freed at most once.
#[no_mangle]
pub unsafe extern "C" fn kglp_assembler_free(handle: *mut KglpAssembler) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// A trained checkpoint with its tokenizer.
pub struct KglpModel {
    model: Model,
    tokenizer: WhitespaceTokenizer,
}

/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kglp_model_load(path: *const c_char, out: *mut *mut KglpModel) -> KglpStatus {
    guard(|| {
        let path = tri!(str_arg(path, "path"));
        match checkpoint::load(Path::new(path)) {
            Ok(model) => {
                let tokenizer = model.tokenizer();
                put(out, Box::into_raw(Box::new(KglpModel { model, tokenizer })))
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `handle` must come from [`kglp_model_load`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kglp_model_num_labels(handle: *const KglpModel, out: *mut usize) -> KglpStatus {
    guard(|| match handle.as_ref() {
        Some(m) => put(out, m.model.labels.len()),
        None => fail(KglpStatus::NullPointer, "`handle` is null"),
    })
}

/// Name of label column `index`; free the result with [`kglp_string_free`].
///
/// # Safety
/// `handle` must come from [`kglp_model_load`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kglp_model_label_name(
    handle: *const KglpModel,
    index: usize,
    out: *mut *mut c_char,
) -> KglpStatus {
    guard(|| {
        let Some(m) = handle.as_ref() else {
            return fail(KglpStatus::NullPointer, "`handle` is null");
        };
        match m.model.labels.get(index) {
            Some(name) => put_string(out, name),
            None => fail(KglpStatus::InvalidArgument, format!("label index {index} out of range")),
        }
    })
}

/// Per-label probabilities for an assembled input text. `out` must hold
/// `capacity` values, at least the number of labels.
///
/// # Safety
/// `handle` must come from [`kglp_model_load`]; `text` must be
/// NUL-terminated; `out` must point to `capacity` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn kglp_model_predict(
    handle: *const KglpModel,
    text: *const c_char,
    out: *mut f64,
    capacity: usize,
) -> KglpStatus {
    guard(|| {
        let Some(m) = handle.as_ref() else {
            return fail(KglpStatus::NullPointer, "`handle` is null");
        };
        let text = tri!(str_arg(text, "text"));
        let k = m.model.labels.len();
        if capacity < k {
            return fail(KglpStatus::InvalidArgument, format!("output holds {capacity} values, need {k}"));
        }
        if out.is_null() {
            return fail(KglpStatus::NullPointer, "`out` is null");
        }
        let probs = m.model.predict(&m.model.encode_text(text, &m.tokenizer));
        std::slice::from_raw_parts_mut(out, k).copy_from_slice(&probs);
        KglpStatus::Ok
    })
}

/// # Safety
/// `handle` must be null or come from [`kglp_model_load`], freed at most once.
#[no_mangle]
pub unsafe extern "C" fn kglp_model_free(handle: *mut KglpModel) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}
