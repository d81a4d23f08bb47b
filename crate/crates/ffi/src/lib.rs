//! C ABI over the transal engine.
//!
//! Every fallible call returns a [`TransalStatus`] and writes its result
//! through an out-pointer. On failure a message is kept per thread and can
//! be read with [`transal_last_error`]. Handles are opaque and must be
//! released with their matching `_free` function. Strings returned by the
//! library are released with [`transal_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, UnwindSafe};
use std::ptr;

use transal::acquisition::{self, AcquisitionConfig, SelectionContext, Strategy};
use transal::campaign;
use transal::corpus::{self, Corpus};
use transal::features::NgramEmbedder;
use transal::lf::{self, LfTree};

/// Result codes. Zero is success.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransalStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    IoError = 4,
    InvalidArgument = 5,
    SelectionFailed = 6,
    Panic = 7,
}

/// A parsed logical form.
pub struct TransalLf(LfTree);

/// A loaded corpus.
pub struct TransalCorpus(Corpus);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let msg = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Failure(TransalStatus, String);

type Res<T> = Result<T, Failure>;

fn fail<T>(status: TransalStatus, message: impl Into<String>) -> Res<T> {
    Err(Failure(status, message.into()))
}

/// Runs `f`, records any failure and converts panics into a status.
fn guard(f: impl FnOnce() -> Res<()> + UnwindSafe) -> TransalStatus {
    match catch_unwind(f) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            TransalStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            TransalStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Res<&'a str> {
    if p.is_null() {
        return fail(TransalStatus::NullPointer, format!("{name} is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(TransalStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, name: &str) -> Res<&'a T> {
    p.as_ref().ok_or_else(|| Failure(TransalStatus::NullPointer, format!("{name} is null")))
}

fn out_ptr<T>(p: *mut T) -> Res<()> {
    if p.is_null() {
        return fail(TransalStatus::NullPointer, "output pointer is null");
    }
    Ok(())
}

fn to_c(s: String) -> Res<*mut c_char> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure(TransalStatus::InvalidArgument, "string contains NUL".into()))
}

/// The message for the last failed call on this thread, or NULL. Valid
/// until the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn transal_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn transal_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by the library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn transal_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a bracketed LF.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn transal_lf_parse(text: *const c_char, out: *mut *mut TransalLf) -> TransalStatus {
    guard(|| {
        out_ptr(out)?;
        let text = str_arg(text, "text")?;
        let tree = lf::parse_lf(text).map_err(|e| Failure(TransalStatus::ParseError, e.to_string()))?;
        *out = Box::into_raw(Box::new(TransalLf(tree)));
        Ok(())
    })
}

/// Renders an LF in canonical form.
///
/// # Safety
/// `lf` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn transal_lf_render(lf: *const TransalLf, out: *mut *mut c_char) -> TransalStatus {
    guard(|| {
        out_ptr(out)?;
        let lf = handle(lf, "lf")?;
        *out = to_c(lf::render_lf(&lf.0))?;
        Ok(())
    })
}

/// Number of nodes in the tree.
///
/// # Safety
/// `lf` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn transal_lf_node_count(lf: *const TransalLf, out: *mut usize) -> TransalStatus {
    guard(|| {
        out_ptr(out)?;
        *out = handle(lf, "lf")?.0.node_count();
        Ok(())
    })
}

/// Distinct compounds of the LF, one per line, sorted.
///
/// # Safety
/// `lf` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn transal_lf_compounds(lf: *const TransalLf, out: *mut *mut c_char) -> TransalStatus {
    guard(|| {
        out_ptr(out)?;
        let lf = handle(lf, "lf")?;
        let mut compounds: Vec<String> = lf::extract_compounds(&lf.0).iter().map(|c| c.to_string()).collect();
        compounds.sort();
        compounds.dedup();
        *out = to_c(compounds.join("\n"))?;
        Ok(())
    })
}

/// Releases an LF handle. NULL is ignored.
///
/// # Safety
/// `lf` must come from [`transal_lf_parse`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn transal_lf_free(lf: *mut TransalLf) {
    if !lf.is_null() {
        drop(Box::from_raw(lf));
    }
}

/// Loads a JSON-lines corpus.
///
/// # Safety
/// String arguments must be NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn transal_corpus_load(
    path: *const c_char,
    source_lang: *const c_char,
    target_lang: *const c_char,
    out: *mut *mut TransalCorpus,
) -> TransalStatus {
    guard(|| {
        out_ptr(out)?;
        let path = str_arg(path, "path")?;
        let source = str_arg(source_lang, "source_lang")?;
        let target = str_arg(target_lang, "target_lang")?;
        let c = corpus::load_corpus(path, source, target).map_err(|e| {
            let status = match e {
                corpus::CorpusError::Io { .. } => TransalStatus::IoError,
                _ => TransalStatus::ParseError,
            };
            Failure(status, e.to_string())
        })?;
        *out = Box::into_raw(Box::new(TransalCorpus(c)));
        Ok(())
    })
}

/// Number of examples in the corpus.
///
/// # Safety
/// `corpus` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn transal_corpus_len(corpus: *const TransalCorpus, out: *mut usize) -> TransalStatus {
    guard(|| {
        out_ptr(out)?;
        *out = handle(corpus, "corpus")?.0.len();
        Ok(())
    })
}

/// Releases a corpus handle. NULL is ignored.
///
/// # Safety
/// `corpus` must come from [`transal_corpus_load`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn transal_corpus_free(corpus: *mut TransalCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// Selects `budget` examples from the whole corpus using source data only
/// and writes their ids, one per line. Strategies that need a parser or a
/// machine translator are rejected.
///
/// # Safety
/// `corpus` must be a live handle, `strategy` NUL-terminated and `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn transal_select(
    corpus: *const TransalCorpus,
    strategy: *const c_char,
    budget: usize,
    seed: u64,
    out: *mut *mut c_char,
) -> TransalStatus {
    guard(|| {
        out_ptr(out)?;
        let corpus = handle(corpus, "corpus")?;
        let strategy: Strategy = str_arg(strategy, "strategy")?
            .parse()
            .map_err(|e: acquisition::AcquisitionError| Failure(TransalStatus::InvalidArgument, e.to_string()))?;
        let mut config = AcquisitionConfig::new(strategy);
        config.seed = seed;
        let source = corpus.0.source_only();
        let embedder = NgramEmbedder;
        let ctx = SelectionContext {
            candidates: source.examples().iter().collect(),
            translated: Vec::new(),
            source_lang: source.source_lang(),
            round: 1,
            parser: None,
            target_distribution: None,
            translator: None,
            embedder: &embedder,
        };
        let selection =
            acquisition::select(&config, &ctx, budget).map_err(|e| Failure(TransalStatus::SelectionFailed, e.to_string()))?;
        *out = to_c(selection.ids().join("\n"))?;
        Ok(())
    })
}

/// Per-round batch sizes for a pool of `pool_size` and `len` cumulative
/// percentages. Writes `len` values to `out`.
///
/// # Safety
/// `percents` must point to `len` doubles and `out` to `len` writable slots.
#[no_mangle]
pub unsafe extern "C" fn transal_budget_sizes(
    pool_size: usize,
    percents: *const f64,
    len: usize,
    out: *mut usize,
) -> TransalStatus {
    guard(|| {
        out_ptr(out)?;
        if percents.is_null() {
            return fail(TransalStatus::NullPointer, "percents is null");
        }
        let percents = std::slice::from_raw_parts(percents, len);
        let sizes = campaign::budget_sizes(pool_size, percents)
            .map_err(|e| Failure(TransalStatus::InvalidArgument, e.to_string()))?;
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(&sizes);
        Ok(())
    })
}
