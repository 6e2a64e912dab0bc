use std::ffi::{CStr, CString};
use std::ptr;

use ssparse_ffi::*;

const GRAMMAR: &str = include_str!("../../core/testdata/paper_grammar.pcfg");
const KB: &str = include_str!("../../core/testdata/instrument_kb.json");

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

unsafe fn take(s: *mut std::ffi::c_char) -> String {
    assert!(!s.is_null());
    let out = CStr::from_ptr(s).to_str().unwrap().to_owned();
    ssparse_string_free(s);
    out
}

fn last_error() -> String {
    let p = ssparse_last_error();
    assert!(!p.is_null(), "expected an error message");
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned()
}

unsafe fn grammar() -> *mut SsparseGrammar {
    let mut g = ptr::null_mut();
    assert_eq!(ssparse_grammar_load(c(GRAMMAR).as_ptr(), &mut g), SsparseStatus::Ok);
    g
}

unsafe fn theory() -> *mut SsparseMtheory {
    let mut t = ptr::null_mut();
    assert_eq!(ssparse_mtheory_load(c(KB).as_ptr(), &mut t), SsparseStatus::Ok);
    t
}

#[test]
fn parse_and_inside() {
    unsafe {
        let g = grammar();
        let (mut tree, mut p) = (ptr::null_mut(), 0.0);
        let s = c("Alex eats fish with fork");
        let st = ssparse_parse(g, s.as_ptr(), SsparseTreeFormat::Bracketed, &mut tree, &mut p);
        assert_eq!(st, SsparseStatus::Ok);
        assert_eq!(take(tree), "(S (NP Alex) (VP (V eats) (NP (NP fish) (PP (P with) (NP fork)))))");
        assert!((p - 4.536e-4).abs() < 1e-15);
        assert!(ssparse_last_error().is_null());

        let mut inside = 0.0;
        assert_eq!(ssparse_inside(g, s.as_ptr(), &mut inside), SsparseStatus::Ok);
        assert!((inside - 7.2576e-4).abs() < 1e-15);

        let mut n = 99;
        assert_eq!(ssparse_grammar_normalization_violations(g, &mut n), SsparseStatus::Ok);
        assert_eq!(n, 0);
        ssparse_grammar_free(g);
    }
}

#[test]
fn parse_failures_set_last_error() {
    unsafe {
        let g = grammar();
        let mut tree = ptr::null_mut();
        let st = ssparse_parse(g, c("Alex eats rocks").as_ptr(), SsparseTreeFormat::Ascii, &mut tree, ptr::null_mut());
        assert_eq!(st, SsparseStatus::ParseError);
        assert!(tree.is_null());
        assert!(last_error().contains("unknown token 'rocks'"));

        let st = ssparse_parse(ptr::null(), c("fish").as_ptr(), SsparseTreeFormat::Ascii, &mut tree, ptr::null_mut());
        assert_eq!(st, SsparseStatus::NullArgument);
        let st = ssparse_parse(g, ptr::null(), SsparseTreeFormat::Ascii, &mut tree, ptr::null_mut());
        assert_eq!(st, SsparseStatus::NullArgument);
        let bad = [0xffu8, 0];
        let st = ssparse_parse(g, bad.as_ptr().cast(), SsparseTreeFormat::Ascii, &mut tree, ptr::null_mut());
        assert_eq!(st, SsparseStatus::InvalidUtf8);
        ssparse_grammar_free(g);
    }
}

#[test]
fn load_errors() {
    unsafe {
        let mut g = ptr::null_mut();
        assert_eq!(ssparse_grammar_load(c("S -> A B C 1.0").as_ptr(), &mut g), SsparseStatus::GrammarError);
        assert!(g.is_null());
        assert!(last_error().contains("line 1"));
        let mut t = ptr::null_mut();
        assert_eq!(ssparse_mtheory_load(c("{oops").as_ptr(), &mut t), SsparseStatus::MtheoryError);
        assert!(t.is_null());
        assert_eq!(ssparse_grammar_load(c(GRAMMAR).as_ptr(), ptr::null_mut()), SsparseStatus::NullArgument);
        // Freeing null is a no-op.
        ssparse_grammar_free(ptr::null_mut());
        ssparse_mtheory_free(ptr::null_mut());
        ssparse_semantic_parser_free(ptr::null_mut());
        ssparse_string_free(ptr::null_mut());
    }
}

#[test]
fn query_posterior_json() {
    unsafe {
        let t = theory();
        let mut json = ptr::null_mut();
        let var = c("hasProbability(eats_fish_with_fork, vp->vp_pp)");
        assert_eq!(ssparse_query(t, var.as_ptr(), ptr::null(), 10, &mut json), SsparseStatus::Ok);
        let v: serde_json::Value = serde_json::from_str(&take(json)).unwrap();
        assert_eq!(v["states"], serde_json::json!(["T", "F"]));
        assert!((v["posterior"][0].as_f64().unwrap() - 0.7).abs() < 1e-12);

        let var = c("hasProbability(nobody, vp->vp_pp)");
        assert_eq!(ssparse_query(t, var.as_ptr(), ptr::null(), 10, &mut json), SsparseStatus::QueryError);
        assert!(last_error().contains("nobody"));
        let var = c("hasProbability(eats_fish_with_fork, vp->vp_pp)");
        assert_eq!(ssparse_query(t, var.as_ptr(), ptr::null(), 0, &mut json), SsparseStatus::InvalidArgument);
        let ev = c("no equals sign");
        assert_eq!(ssparse_query(t, var.as_ptr(), ev.as_ptr(), 10, &mut json), SsparseStatus::InvalidArgument);
        ssparse_mtheory_free(t);
    }
}

#[test]
fn query_with_evidence() {
    let kb = r#"{"name": "wet", "mfrags": [{"name": "F", "residents": [
        {"name": "Rain", "cpt": {"default": [0.2, 0.8]}},
        {"name": "Wet", "parents": ["Rain"], "cpt": {"rows": [
            {"given": {"Rain": "T"}, "dist": [0.9, 0.1]},
            {"given": {"Rain": "F"}, "dist": [0.1, 0.9]}]}}]}]}"#;
    unsafe {
        let mut t = ptr::null_mut();
        assert_eq!(ssparse_mtheory_load(c(kb).as_ptr(), &mut t), SsparseStatus::Ok);
        let mut json = ptr::null_mut();
        let st = ssparse_query(t, c("Rain").as_ptr(), c("Wet=T\n").as_ptr(), 10, &mut json);
        assert_eq!(st, SsparseStatus::Ok);
        let v: serde_json::Value = serde_json::from_str(&take(json)).unwrap();
        assert!((v["posterior"][0].as_f64().unwrap() - 0.18 / 0.26).abs() < 1e-12);
        ssparse_mtheory_free(t);
    }
}

#[test]
fn semantic_parse_flips_attachment() {
    unsafe {
        let (g, t) = (grammar(), theory());
        let mut sp = ptr::null_mut();
        assert_eq!(ssparse_semantic_parser_new(g, t, &mut sp), SsparseStatus::Ok);
        // The parser keeps its own copies.
        ssparse_grammar_free(g);
        ssparse_mtheory_free(t);

        let (mut tree, mut p, mut trace) = (ptr::null_mut(), 0.0, ptr::null_mut());
        let s = c("Alex eats fish with fork");
        let st = ssparse_sparse(
            sp,
            s.as_ptr(),
            SsparseMode::Literal,
            10,
            SsparseTreeFormat::Bracketed,
            &mut tree,
            &mut p,
            &mut trace,
        );
        assert_eq!(st, SsparseStatus::Ok);
        assert_eq!(take(tree), "(S (NP Alex) (VP (VP (V eats) (NP fish)) (PP (P with) (NP fork))))");
        assert!((p - 2.7216e-4).abs() < 1e-15);
        let trace: serde_json::Value = serde_json::from_str(&take(trace)).unwrap();
        assert_eq!(trace[0]["winner"], "VP -> VP PP");

        let st = ssparse_sparse(
            sp,
            s.as_ptr(),
            SsparseMode::Normalized,
            10,
            SsparseTreeFormat::Bracketed,
            &mut tree,
            ptr::null_mut(),
            ptr::null_mut(),
        );
        assert_eq!(st, SsparseStatus::Ok);
        assert!(take(tree).contains("(NP (NP fish)"));

        let st = ssparse_sparse(
            sp,
            c("with with").as_ptr(),
            SsparseMode::Literal,
            10,
            SsparseTreeFormat::Json,
            &mut tree,
            ptr::null_mut(),
            ptr::null_mut(),
        );
        assert_eq!(st, SsparseStatus::ParseError);
        ssparse_semantic_parser_free(sp);
    }
}

#[test]
fn conflation() {
    unsafe {
        let mut x = 0.0;
        assert_eq!(ssparse_conflate(1.512e-3, 0.7, &mut x), SsparseStatus::Ok);
        assert!((x - 3.5209018618e-3).abs() < 1e-12);
        assert_eq!(ssparse_conflate(0.0, 1.0, &mut x), SsparseStatus::ConflationError);
        assert_eq!(ssparse_conflate(1.5, 0.5, &mut x), SsparseStatus::ConflationError);
        assert_eq!(ssparse_conflate(0.5, 0.5, ptr::null_mut()), SsparseStatus::NullArgument);
    }
}

#[test]
fn version_is_static() {
    let v = unsafe { CStr::from_ptr(ssparse_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn errors_are_per_thread() {
    unsafe {
        let mut x = 0.0;
        assert_eq!(ssparse_conflate(2.0, 0.5, &mut x), SsparseStatus::ConflationError);
        std::thread::spawn(|| assert!(ssparse_last_error().is_null())).join().unwrap();
        assert!(!ssparse_last_error().is_null());
    }
}
