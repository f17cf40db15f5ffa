//! C ABI for the crowdner tagger.
//!
//! Every fallible function returns a [`CrowdnerStatus`]; on failure the
//! message is available from [`crowdner_last_error`] on the same thread.
//! Strings returned to the caller are owned by the caller and released with
//! [`crowdner_string_free`]. Handles are released with their `_free`
//! function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use crowdner::crf::{self, Emissions};
use crowdner::data::{load_corpus, save_corpus, vote_corpus, LoadOptions};
use crowdner::model::checkpoint::Tagger;
use crowdner::numcore::{Graph, Tensor};
use crowdner::train_eval::evaluate;
use crowdner::Error;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrowdnerStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    Validation = 5,
    Config = 6,
    Shape = 7,
    NonFinite = 8,
    Panic = 9,
}

/// Opaque trained tagger.
pub struct CrowdnerTagger {
    inner: Tagger,
}

/// Entity-level scores.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CrowdnerEval {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub gold: u64,
    pub predicted: u64,
    pub correct: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(CrowdnerStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Shape { .. } => CrowdnerStatus::Shape,
            Error::Validation(_) => CrowdnerStatus::Validation,
            Error::Parse { .. } => CrowdnerStatus::Parse,
            Error::NonFinite(_) => CrowdnerStatus::NonFinite,
            Error::Config(_) => CrowdnerStatus::Config,
            Error::Io { .. } => CrowdnerStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

fn null(name: &str) -> Failure {
    Failure(CrowdnerStatus::NullPointer, format!("{name} is null"))
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CrowdnerStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CrowdnerStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            CrowdnerStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(CrowdnerStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn crowdner_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn crowdner_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn crowdner_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a checkpoint written by `crowdner train`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn crowdner_tagger_load(path: *const c_char, out: *mut *mut CrowdnerTagger) -> CrowdnerStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let path = str_arg(path, "path")?;
        let inner = Tagger::load(Path::new(path))?;
        *out = Box::into_raw(Box::new(CrowdnerTagger { inner }));
        Ok(())
    })
}

/// Releases a tagger. Null is ignored.
///
/// # Safety
/// `tagger` must come from [`crowdner_tagger_load`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn crowdner_tagger_free(tagger: *mut CrowdnerTagger) {
    if !tagger.is_null() {
        drop(Box::from_raw(tagger));
    }
}

/// Tags one sentence. `*labels` receives one label per character separated
/// by single spaces, e.g. `"O B-PER E-PER"`; free it with
/// [`crowdner_string_free`].
///
/// # Safety
/// `tagger` must be a live handle, `text` a NUL-terminated UTF-8 string and
/// `labels` writable.
#[no_mangle]
pub unsafe extern "C" fn crowdner_tagger_tag(
    tagger: *const CrowdnerTagger,
    text: *const c_char,
    labels: *mut *mut c_char,
) -> CrowdnerStatus {
    guard(|| {
        if labels.is_null() {
            return Err(null("labels"));
        }
        *labels = ptr::null_mut();
        let tagger = tagger.as_ref().ok_or_else(|| null("tagger"))?;
        let chars: Vec<char> = str_arg(text, "text")?.chars().collect();
        let tags = tagger.inner.tag(&chars)?;
        let joined = tags.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(" ");
        *labels = CString::new(joined).expect("labels contain no NUL").into_raw();
        Ok(())
    })
}

/// Scores the tagger on a gold corpus file.
///
/// # Safety
/// `tagger` must be a live handle, `gold_path` a NUL-terminated string and
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn crowdner_tagger_evaluate(
    tagger: *const CrowdnerTagger,
    gold_path: *const c_char,
    out: *mut CrowdnerEval,
) -> CrowdnerStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let tagger = tagger.as_ref().ok_or_else(|| null("tagger"))?;
        let path = str_arg(gold_path, "gold_path")?;
        let opts = LoadOptions {
            labels: Some(tagger.inner.labels.clone()),
            strict: false,
        };
        let gold = load_corpus(Path::new(path), &opts)?;
        let r = evaluate(&tagger.inner, &gold)?;
        *out = CrowdnerEval {
            precision: r.precision,
            recall: r.recall,
            f1: r.f1,
            gold: r.gold as u64,
            predicted: r.predicted as u64,
            correct: r.correct as u64,
        };
        Ok(())
    })
}

/// Majority-votes a crowd corpus file into `out_path`.
///
/// # Safety
/// Both paths must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn crowdner_vote_file(in_path: *const c_char, out_path: *const c_char) -> CrowdnerStatus {
    guard(|| {
        let input = str_arg(in_path, "in_path")?;
        let output = str_arg(out_path, "out_path")?;
        let corpus = load_corpus(Path::new(input), &LoadOptions::default())?;
        let (voted, _) = vote_corpus(&corpus)?;
        save_corpus(Path::new(output), &voted)?;
        Ok(())
    })
}

unsafe fn crf_inputs(
    emissions: *const f64,
    len: usize,
    num_labels: usize,
    transitions: *const f64,
) -> Result<(Tensor, Tensor), Failure> {
    if emissions.is_null() {
        return Err(null("emissions"));
    }
    if transitions.is_null() {
        return Err(null("transitions"));
    }
    if len == 0 || num_labels == 0 {
        return Err(Failure(CrowdnerStatus::Validation, "empty emission matrix".into()));
    }
    let k = num_labels + 2;
    let em = Tensor::new(len, num_labels, std::slice::from_raw_parts(emissions, len * num_labels).to_vec())?;
    let tr = Tensor::new(k, k, std::slice::from_raw_parts(transitions, k * k).to_vec())?;
    Ok((em, tr))
}

/// Best label path under a linear-chain CRF. `emissions` is row-major
/// `len x num_labels`; `transitions` is row-major `(num_labels + 2)^2`,
/// indexed `[prev][next]` with BOS at `num_labels` and EOS at
/// `num_labels + 1`. `path` must hold `len` entries.
///
/// # Safety
/// Pointers must be valid for the stated sizes.
#[no_mangle]
pub unsafe extern "C" fn crowdner_crf_viterbi(
    emissions: *const f64,
    len: usize,
    num_labels: usize,
    transitions: *const f64,
    path: *mut usize,
    score: *mut f64,
) -> CrowdnerStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        let score = score.as_mut().ok_or_else(|| null("score"))?;
        let (em, tr) = crf_inputs(emissions, len, num_labels, transitions)?;
        let (best, s) = crf::viterbi(&em, &tr)?;
        std::slice::from_raw_parts_mut(path, len).copy_from_slice(&best);
        *score = s;
        Ok(())
    })
}

/// Log partition function with the layout of [`crowdner_crf_viterbi`].
///
/// # Safety
/// Pointers must be valid for the stated sizes.
#[no_mangle]
pub unsafe extern "C" fn crowdner_crf_log_partition(
    emissions: *const f64,
    len: usize,
    num_labels: usize,
    transitions: *const f64,
    out: *mut f64,
) -> CrowdnerStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let (em, tr) = crf_inputs(emissions, len, num_labels, transitions)?;
        let mut g = Graph::new();
        let em = Emissions::from_tensor(&mut g, &em)?;
        let tr = g.input(tr);
        let z = crf::log_partition(&mut g, &em, tr)?;
        *out = g.value(z).item();
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_arguments_set_last_error() {
        let mut out = ptr::null_mut();
        let status = unsafe { crowdner_tagger_load(ptr::null(), &mut out) };
        assert_eq!(status, CrowdnerStatus::NullPointer);
        assert!(out.is_null());
        let msg = unsafe { CStr::from_ptr(crowdner_last_error()) };
        assert_eq!(msg.to_str().unwrap(), "path is null");
    }

    #[test]
    fn viterbi_single_label() {
        let em = [1.0, 2.0];
        let tr = [0.0; 9];
        let mut path = [9usize; 2];
        let mut score = 0.0;
        let status = unsafe { crowdner_crf_viterbi(em.as_ptr(), 2, 1, tr.as_ptr(), path.as_mut_ptr(), &mut score) };
        assert_eq!(status, CrowdnerStatus::Ok);
        assert_eq!(path, [0, 0]);
        assert_eq!(score, 3.0);
        assert!(crowdner_last_error().is_null());
    }
}
