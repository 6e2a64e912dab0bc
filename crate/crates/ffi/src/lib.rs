//! C ABI for `ssparse`.
//!
//! Objects cross the boundary as opaque handles created by `*_load` or
//! `*_new` and released by the matching `*_free`. Every fallible call
//! returns an [`SsparseStatus`]; on failure the message is available from
//! [`ssparse_last_error`] on the same thread. Strings handed out by the
//! library must be released with [`ssparse_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ssparse::bridge::conflate;
use ssparse::chart::TreeFormat;
use ssparse::mebn::{load_mtheory, query_posterior, GroundedVar, MTheory};
use ssparse::ssparser::{Mode, SemanticError, SemanticOptions, SemanticParser};
use ssparse::{inside_probability, load_grammar, render_tree, viterbi_parse, Pcfg};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsparseStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    GrammarError = 4,
    MtheoryError = 5,
    ParseError = 6,
    QueryError = 7,
    BridgeError = 8,
    ConflationError = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsparseTreeFormat {
    Bracketed = 0,
    Ascii = 1,
    Json = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsparseMode {
    Literal = 0,
    Normalized = 1,
}

/// A loaded grammar.
pub struct SsparseGrammar {
    inner: Pcfg,
}

/// A loaded, validated MTheory.
pub struct SsparseMtheory {
    inner: MTheory,
}

/// A grammar bridged to a knowledge base.
pub struct SsparseSemanticParser {
    grammar: Pcfg,
    theory: MTheory,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

struct Failure(SsparseStatus, String);

impl Failure {
    fn new(status: SsparseStatus, msg: impl ToString) -> Self {
        Failure(status, msg.to_string())
    }
}

/// Runs `f`, recording errors and turning panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SsparseStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            SsparseStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SsparseStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(SsparseStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure::new(SsparseStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure::new(SsparseStatus::NullArgument, format!("{what} is null")))
}

fn out_ptr<T>(p: *mut T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure::new(SsparseStatus::NullArgument, format!("{what} is null")))
    } else {
        Ok(())
    }
}

fn owned(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).map_or(ptr::null_mut(), CString::into_raw)
}

fn tree_format(f: SsparseTreeFormat) -> TreeFormat {
    match f {
        SsparseTreeFormat::Bracketed => TreeFormat::Bracketed,
        SsparseTreeFormat::Ascii => TreeFormat::Ascii,
        SsparseTreeFormat::Json => TreeFormat::Json,
    }
}

fn depth(limit: u32) -> Result<usize, Failure> {
    if limit == 0 {
        Err(Failure::new(SsparseStatus::InvalidArgument, "depth limit must be at least 1"))
    } else {
        Ok(limit as usize)
    }
}

/// Message of the last failed call on this thread, or null. Valid until
/// the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn ssparse_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn ssparse_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by the library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ssparse_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses grammar file text.
///
/// # Safety
/// `source` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ssparse_grammar_load(source: *const c_char, out: *mut *mut SsparseGrammar) -> SsparseStatus {
    guard(|| {
        out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let g = load_grammar(text(source, "source")?).map_err(|e| Failure::new(SsparseStatus::GrammarError, e))?;
        *out = Box::into_raw(Box::new(SsparseGrammar { inner: g }));
        Ok(())
    })
}

/// # Safety
/// `grammar` must come from [`ssparse_grammar_load`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ssparse_grammar_free(grammar: *mut SsparseGrammar) {
    if !grammar.is_null() {
        drop(Box::from_raw(grammar));
    }
}

/// Number of nonterminals whose rule probabilities do not sum to one.
///
/// # Safety
/// `grammar` must be a live handle; `out_count` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ssparse_grammar_normalization_violations(
    grammar: *const SsparseGrammar,
    out_count: *mut usize,
) -> SsparseStatus {
    guard(|| {
        out_ptr(out_count, "out_count")?;
        *out_count = handle(grammar, "grammar")?.inner.validate_normalization().len();
        Ok(())
    })
}

/// Viterbi parse of a whitespace-separated sentence. `out_tree` receives
/// the rendered tree; `out_probability` may be null.
///
/// # Safety
/// Pointers must be valid; `out_tree` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ssparse_parse(
    grammar: *const SsparseGrammar,
    sentence: *const c_char,
    format: SsparseTreeFormat,
    out_tree: *mut *mut c_char,
    out_probability: *mut f64,
) -> SsparseStatus {
    guard(|| {
        out_ptr(out_tree, "out_tree")?;
        *out_tree = ptr::null_mut();
        let g = handle(grammar, "grammar")?;
        let tokens: Vec<&str> = text(sentence, "sentence")?.split_whitespace().collect();
        let (tree, p) = viterbi_parse(&g.inner, &tokens).map_err(|e| Failure::new(SsparseStatus::ParseError, e))?;
        *out_tree = owned(render_tree(&tree, tree_format(format)));
        if !out_probability.is_null() {
            *out_probability = p;
        }
        Ok(())
    })
}

/// Total probability of the sentence under the grammar.
///
/// # Safety
/// Pointers must be valid; `out_probability` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ssparse_inside(
    grammar: *const SsparseGrammar,
    sentence: *const c_char,
    out_probability: *mut f64,
) -> SsparseStatus {
    guard(|| {
        out_ptr(out_probability, "out_probability")?;
        let g = handle(grammar, "grammar")?;
        let tokens: Vec<&str> = text(sentence, "sentence")?.split_whitespace().collect();
        *out_probability =
            inside_probability(&g.inner, &tokens).map_err(|e| Failure::new(SsparseStatus::ParseError, e))?;
        Ok(())
    })
}

/// Parses and validates an MTheory JSON document.
///
/// # Safety
/// `source` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ssparse_mtheory_load(source: *const c_char, out: *mut *mut SsparseMtheory) -> SsparseStatus {
    guard(|| {
        out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let t = load_mtheory(text(source, "source")?).map_err(|e| Failure::new(SsparseStatus::MtheoryError, e))?;
        *out = Box::into_raw(Box::new(SsparseMtheory { inner: t }));
        Ok(())
    })
}

/// # Safety
/// `theory` must come from [`ssparse_mtheory_load`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ssparse_mtheory_free(theory: *mut SsparseMtheory) {
    if !theory.is_null() {
        drop(Box::from_raw(theory));
    }
}

/// Posterior of `variable` (`name(a, b)`). `evidence` may be null or hold
/// one `name(args)=STATE` per line. The result is JSON:
/// `{"variable": ..., "states": [...], "posterior": [...]}`.
///
/// # Safety
/// Pointers must be valid; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ssparse_query(
    theory: *const SsparseMtheory,
    variable: *const c_char,
    evidence: *const c_char,
    depth_limit: u32,
    out_json: *mut *mut c_char,
) -> SsparseStatus {
    guard(|| {
        out_ptr(out_json, "out_json")?;
        *out_json = ptr::null_mut();
        let t = handle(theory, "theory")?;
        let query_err = |e: ssparse::MebnError| Failure::new(SsparseStatus::QueryError, e);
        let var: GroundedVar = text(variable, "variable")?.parse().map_err(query_err)?;
        let mut observed = Vec::new();
        if !evidence.is_null() {
            for line in text(evidence, "evidence")?.lines().map(str::trim).filter(|l| !l.is_empty()) {
                let (v, s) = line
                    .rsplit_once('=')
                    .ok_or_else(|| Failure::new(SsparseStatus::InvalidArgument, format!("bad evidence '{line}'")))?;
                observed.push((v.parse().map_err(query_err)?, s.trim().to_string()));
            }
        }
        let (states, dist) = query_posterior(&t.inner, &var, &observed, depth(depth_limit)?).map_err(query_err)?;
        let doc = serde_json::json!({"variable": var.to_string(), "states": states, "posterior": dist});
        *out_json = owned(doc.to_string());
        Ok(())
    })
}

/// Bridges `theory` to `grammar`. Both handles stay owned by the caller.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ssparse_semantic_parser_new(
    grammar: *const SsparseGrammar,
    theory: *const SsparseMtheory,
    out: *mut *mut SsparseSemanticParser,
) -> SsparseStatus {
    guard(|| {
        out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let (g, t) = (handle(grammar, "grammar")?, handle(theory, "theory")?);
        // Bridge once up front so a bad knowledge base fails here.
        let parser =
            SemanticParser::new(&g.inner, &t.inner).map_err(|e| Failure::new(SsparseStatus::BridgeError, e))?;
        let theory = parser.theory().clone();
        *out = Box::into_raw(Box::new(SsparseSemanticParser { grammar: g.inner.clone(), theory }));
        Ok(())
    })
}

/// # Safety
/// `parser` must come from [`ssparse_semantic_parser_new`] and not have
/// been freed.
#[no_mangle]
pub unsafe extern "C" fn ssparse_semantic_parser_free(parser: *mut SsparseSemanticParser) {
    if !parser.is_null() {
        drop(Box::from_raw(parser));
    }
}

/// Parse with knowledge-base attachment decisions. `out_probability` and
/// `out_trace_json` may be null.
///
/// # Safety
/// Pointers must be valid; `out_tree` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ssparse_sparse(
    parser: *const SsparseSemanticParser,
    sentence: *const c_char,
    mode: SsparseMode,
    depth_limit: u32,
    format: SsparseTreeFormat,
    out_tree: *mut *mut c_char,
    out_probability: *mut f64,
    out_trace_json: *mut *mut c_char,
) -> SsparseStatus {
    guard(|| {
        out_ptr(out_tree, "out_tree")?;
        *out_tree = ptr::null_mut();
        if !out_trace_json.is_null() {
            *out_trace_json = ptr::null_mut();
        }
        let sp = handle(parser, "parser")?;
        let tokens: Vec<&str> = text(sentence, "sentence")?.split_whitespace().collect();
        let mode = match mode {
            SsparseMode::Literal => Mode::Literal,
            SsparseMode::Normalized => Mode::Normalized,
        };
        let options = SemanticOptions { mode, depth_limit: depth(depth_limit)?, symmetric: false };
        let parser =
            SemanticParser::new(&sp.grammar, &sp.theory).map_err(|e| Failure::new(SsparseStatus::BridgeError, e))?;
        let result = parser.parse(&tokens, &options).map_err(|e| {
            let status = match e {
                SemanticError::Parse(_) => SsparseStatus::ParseError,
                SemanticError::Bridge(_) => SsparseStatus::BridgeError,
                SemanticError::Query { .. } => SsparseStatus::QueryError,
                SemanticError::Conflation { .. } => SsparseStatus::ConflationError,
            };
            Failure::new(status, e)
        })?;
        *out_tree = owned(render_tree(&result.tree, tree_format(format)));
        if !out_probability.is_null() {
            *out_probability = result.probability;
        }
        if !out_trace_json.is_null() {
            *out_trace_json = owned(serde_json::to_string(&result.trace).expect("trace serializes"));
        }
        Ok(())
    })
}

/// `p q / (p q + (1 - p)(1 - q))`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ssparse_conflate(p: f64, q: f64, out: *mut f64) -> SsparseStatus {
    guard(|| {
        out_ptr(out, "out")?;
        *out = conflate(p, q).map_err(|e| Failure::new(SsparseStatus::ConflationError, e))?;
        Ok(())
    })
}
