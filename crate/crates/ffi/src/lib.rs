//! C ABI over the `cldrd` core.
//!
//! Every fallible function returns a [`CldrdStatus`]; on failure the message is
//! available from [`cldrd_last_error_message`] on the same thread. Handles are
//! opaque and owned by the caller once returned; release each with its
//! `_free` function. Passing NULL to a `_free` function is a no-op.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use cldrd::data::{load_collection, load_qrels, load_run};
use cldrd::encoder::{EncoderParams, FeaturizerConfig, Role};
use cldrd::eval::{standard_reports, Gain};
use cldrd::index::{build_index, DenseIndex};
use cldrd::loss::kd_loss_and_grad;
use cldrd::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CldrdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    Integrity = 5,
    Shape = 6,
    Bounds = 7,
    Config = 8,
    Numeric = 9,
    Domain = 10,
    Precondition = 11,
    Eval = 12,
    Lookup = 13,
    UnknownDocument = 14,
    StaleIndex = 15,
    Checkpoint = 16,
    BufferTooSmall = 17,
    Panic = 18,
}

impl From<&Error> for CldrdStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Io { .. } => Self::Io,
            Error::Parse { .. } => Self::Parse,
            Error::Integrity(_) => Self::Integrity,
            Error::Shape { .. } => Self::Shape,
            Error::Bounds { .. } => Self::Bounds,
            Error::Config(_) => Self::Config,
            Error::Numeric(_) => Self::Numeric,
            Error::Domain(_) => Self::Domain,
            Error::Precondition(_) => Self::Precondition,
            Error::Eval(_) => Self::Eval,
            Error::Lookup { .. } => Self::Lookup,
            Error::UnknownDocument(_) => Self::UnknownDocument,
            Error::StaleIndex { .. } => Self::StaleIndex,
            Error::Checkpoint { .. } => Self::Checkpoint,
        }
    }
}

/// A student encoder plus the featurizer used to tokenize text for it.
pub struct CldrdEncoder {
    params: EncoderParams,
    featurizer: FeaturizerConfig,
}

pub struct CldrdIndex {
    index: DenseIndex,
}

/// Search results, best first.
pub struct CldrdRankedList {
    doc_ids: Vec<CString>,
    scores: Vec<f64>,
}

/// Role argument of [`cldrd_encoder_encode`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CldrdRole {
    Query = 0,
    Document = 1,
}

/// Mean metric values of one run.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CldrdMetrics {
    pub mrr_at_10: f64,
    pub ndcg_at_10: f64,
    pub map_at_1000: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = c);
}

struct Failure(CldrdStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(CldrdStatus::from(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(CldrdStatus::NullPointer, format!("{what} is NULL"))
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> CldrdStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_last_error("");
            CldrdStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_last_error(&message);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            CldrdStatus::Panic
        }
    }
}

/// # Safety
/// `s` is NULL or a valid NUL-terminated string.
unsafe fn str_arg<'a>(s: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| Failure(CldrdStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

/// # Safety
/// `p` is NULL or points to a live `T`.
unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

/// # Safety
/// `p` is NULL or points to `n` readable values.
unsafe fn slice_arg<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

/// # Safety
/// `out` is non-NULL and writable.
unsafe fn put<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn cldrd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Randomly initialized encoder with the default token caps.
///
/// # Safety
/// `out` must be a valid pointer to write the handle into.
#[no_mangle]
pub unsafe extern "C" fn cldrd_encoder_init(
    vocab_size: usize,
    dim: usize,
    shared: bool,
    seed: u64,
    out: *mut *mut CldrdEncoder,
) -> CldrdStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let params = EncoderParams::init(vocab_size, dim, shared, seed)?;
        put(out, encoder_handle(params));
        Ok(())
    })
}

fn encoder_handle(params: EncoderParams) -> CldrdEncoder {
    let featurizer = FeaturizerConfig {
        vocab_size: params.vocab_size(),
        ..FeaturizerConfig::default()
    };
    CldrdEncoder { params, featurizer }
}

/// Loads a checkpoint written by the trainer.
///
/// # Safety
/// `path` is a NUL-terminated string; `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cldrd_encoder_load(
    path: *const c_char,
    out: *mut *mut CldrdEncoder,
) -> CldrdStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        if out.is_null() {
            return Err(null("out"));
        }
        put(out, encoder_handle(EncoderParams::load(path)?));
        Ok(())
    })
}

/// # Safety
/// `encoder` and `path` are valid.
#[no_mangle]
pub unsafe extern "C" fn cldrd_encoder_save(
    encoder: *const CldrdEncoder,
    path: *const c_char,
) -> CldrdStatus {
    guard(|| {
        let encoder = ref_arg(encoder, "encoder")?;
        encoder.params.save(str_arg(path, "path")?)?;
        Ok(())
    })
}

/// # Safety
/// `encoder` is NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cldrd_encoder_free(encoder: *mut CldrdEncoder) {
    if !encoder.is_null() {
        drop(Box::from_raw(encoder));
    }
}

/// Embedding width; 0 for NULL.
///
/// # Safety
/// `encoder` is NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cldrd_encoder_dim(encoder: *const CldrdEncoder) -> usize {
    encoder.as_ref().map_or(0, |e| e.params.dim())
}

/// Writes the embedding of `text` into `out`, which holds `out_len` values.
///
/// # Safety
/// `encoder` and `text` are valid; `out` points to `out_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn cldrd_encoder_encode(
    encoder: *const CldrdEncoder,
    text: *const c_char,
    role: CldrdRole,
    out: *mut f64,
    out_len: usize,
) -> CldrdStatus {
    guard(|| {
        let encoder = ref_arg(encoder, "encoder")?;
        let text = str_arg(text, "text")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let role = match role {
            CldrdRole::Query => Role::Query,
            CldrdRole::Document => Role::Document,
        };
        let ids = encoder.featurizer.featurize(text, role);
        let vec = encoder.params.encode(&ids, role)?;
        if out_len < vec.0.len() {
            return Err(Failure(
                CldrdStatus::BufferTooSmall,
                format!("need {} values, buffer holds {out_len}", vec.0.len()),
            ));
        }
        std::slice::from_raw_parts_mut(out, vec.0.len()).copy_from_slice(&vec.0);
        Ok(())
    })
}

/// Encodes every document of a `docid<TAB>text` collection file.
///
/// # Safety
/// `encoder` and `collection_path` are valid; `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cldrd_index_build(
    encoder: *const CldrdEncoder,
    collection_path: *const c_char,
    out: *mut *mut CldrdIndex,
) -> CldrdStatus {
    guard(|| {
        let encoder = ref_arg(encoder, "encoder")?;
        let path = str_arg(collection_path, "collection_path")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let corpus = load_collection(path)?;
        let index = build_index(&encoder.params, &corpus, &encoder.featurizer)?;
        put(out, CldrdIndex { index });
        Ok(())
    })
}

/// # Safety
/// `path` is valid; `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cldrd_index_load(
    path: *const c_char,
    out: *mut *mut CldrdIndex,
) -> CldrdStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        if out.is_null() {
            return Err(null("out"));
        }
        put(
            out,
            CldrdIndex {
                index: DenseIndex::load(path)?,
            },
        );
        Ok(())
    })
}

/// # Safety
/// `index` and `path` are valid.
#[no_mangle]
pub unsafe extern "C" fn cldrd_index_save(
    index: *const CldrdIndex,
    path: *const c_char,
) -> CldrdStatus {
    guard(|| {
        let index = ref_arg(index, "index")?;
        index.index.save(str_arg(path, "path")?)?;
        Ok(())
    })
}

/// Number of indexed documents; 0 for NULL.
///
/// # Safety
/// `index` is NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cldrd_index_len(index: *const CldrdIndex) -> usize {
    index.as_ref().map_or(0, |i| i.index.len())
}

/// # Safety
/// `index` is NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cldrd_index_free(index: *mut CldrdIndex) {
    if !index.is_null() {
        drop(Box::from_raw(index));
    }
}

/// Exact top-`k` search for `query_text`. Fails with `CLDRD_STATUS_STALE_INDEX`
/// when the index was built from a different version of a trained encoder.
///
/// # Safety
/// `index`, `encoder` and `query_text` are valid; `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cldrd_index_search(
    index: *const CldrdIndex,
    encoder: *const CldrdEncoder,
    query_text: *const c_char,
    k: usize,
    out: *mut *mut CldrdRankedList,
) -> CldrdStatus {
    guard(|| {
        let index = &ref_arg(index, "index")?.index;
        let encoder = ref_arg(encoder, "encoder")?;
        let text = str_arg(query_text, "query_text")?;
        if out.is_null() {
            return Err(null("out"));
        }
        index.ensure_fresh(&encoder.params)?;
        let ids = encoder.featurizer.featurize(text, Role::Query);
        let q_vec = encoder.params.encode(&ids, Role::Query)?;
        let ranked = index.search(&q_vec, k, "query")?;
        let mut doc_ids = Vec::with_capacity(ranked.len());
        let mut scores = Vec::with_capacity(ranked.len());
        for e in ranked.entries {
            doc_ids.push(CString::new(e.doc_id).map_err(|_| {
                Failure(CldrdStatus::InvalidUtf8, "document id contains NUL".into())
            })?);
            scores.push(e.score);
        }
        put(out, CldrdRankedList { doc_ids, scores });
        Ok(())
    })
}

/// # Safety
/// `list` is NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cldrd_ranked_list_len(list: *const CldrdRankedList) -> usize {
    list.as_ref().map_or(0, |l| l.doc_ids.len())
}

/// Document id at 0-based position `i`, or NULL when out of range. The string
/// lives as long as the list.
///
/// # Safety
/// `list` is NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cldrd_ranked_list_doc_id(
    list: *const CldrdRankedList,
    i: usize,
) -> *const c_char {
    list.as_ref()
        .and_then(|l| l.doc_ids.get(i))
        .map_or(ptr::null(), |s| s.as_ptr())
}

/// Score at 0-based position `i`; NaN when out of range.
///
/// # Safety
/// `list` is NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cldrd_ranked_list_score(list: *const CldrdRankedList, i: usize) -> f64 {
    list.as_ref()
        .and_then(|l| l.scores.get(i).copied())
        .unwrap_or(f64::NAN)
}

/// # Safety
/// `list` is NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cldrd_ranked_list_free(list: *mut CldrdRankedList) {
    if !list.is_null() {
        drop(Box::from_raw(list));
    }
}

/// Distillation loss over one list of `n` documents. `ranks` are the
/// 1-based student retrieval ranks. `grad_out` may be NULL; otherwise it
/// receives `n` values.
///
/// # Safety
/// `scores`, `labels` and `ranks` point to `n` values; `loss_out` is valid;
/// `grad_out` is NULL or points to `n` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn cldrd_kd_loss(
    scores: *const f64,
    labels: *const f64,
    ranks: *const usize,
    n: usize,
    loss_out: *mut f64,
    grad_out: *mut f64,
) -> CldrdStatus {
    guard(|| {
        let scores = slice_arg(scores, n, "scores")?;
        let labels = slice_arg(labels, n, "labels")?;
        let ranks = slice_arg(ranks, n, "ranks")?;
        if loss_out.is_null() {
            return Err(null("loss_out"));
        }
        let (loss, grad) = kd_loss_and_grad(scores, labels, ranks)?;
        *loss_out = loss;
        if !grad_out.is_null() && n > 0 {
            std::slice::from_raw_parts_mut(grad_out, n).copy_from_slice(&grad);
        }
        Ok(())
    })
}

/// MRR@10, nDCG@10 (linear gain) and MAP@1000 of a TREC run file.
///
/// # Safety
/// `run_path` and `qrels_path` are valid strings; `out` is valid.
#[no_mangle]
pub unsafe extern "C" fn cldrd_evaluate(
    run_path: *const c_char,
    qrels_path: *const c_char,
    rel_threshold: u32,
    out: *mut CldrdMetrics,
) -> CldrdStatus {
    guard(|| {
        let run = load_run(Path::new(str_arg(run_path, "run_path")?))?;
        let qrels = load_qrels(Path::new(str_arg(qrels_path, "qrels_path")?))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let reports = standard_reports(&run, &qrels, rel_threshold, Gain::Linear)?;
        *out = CldrdMetrics {
            mrr_at_10: reports[0].mean,
            ndcg_at_10: reports[1].mean,
            map_at_1000: reports[2].mean,
        };
        Ok(())
    })
}
