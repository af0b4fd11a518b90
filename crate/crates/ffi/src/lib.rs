//! C ABI for the sample-select library.
//!
//! Every fallible function returns an [`SsStatus`]. On failure a message is
//! stored per thread and can be read with [`ss_last_error_message`]. Strings
//! returned through out-pointers are owned by the caller and must be released
//! with [`ss_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use sample_select::grammar::{heuristic_parse, is_grammatical};
use sample_select::runner::{DatasetRecord, Pipeline, RunConfig, RunnerError};
use sample_select::scoring::overlap_score;
use sample_select::textproc::{clean_article, split_sentences, word_token_strings};

/// Result codes shared by all functions.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    ConfigError = 4,
    RunError = 5,
    Panic = 6,
}

/// Opaque decoder built from a TOML configuration.
pub struct SsDecoder {
    pipeline: Pipeline,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

struct Failure(SsStatus, String);

impl Failure {
    fn invalid(msg: impl Into<String>) -> Self {
        Failure(SsStatus::InvalidArgument, msg.into())
    }
}

/// Runs `body`, recording any failure or panic as the thread's last error.
fn guarded(body: impl FnOnce() -> Result<(), Failure>) -> SsStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => SsStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            SsStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(SsStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(SsStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn write_string(out: *mut *mut c_char, value: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(SsStatus::NullPointer, "output pointer is null".into()));
    }
    let c = CString::new(value).map_err(|_| Failure::invalid("result contains a NUL byte"))?;
    *out = c.into_raw();
    Ok(())
}

fn check_out<T>(out: *mut T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(SsStatus::NullPointer, "output pointer is null".into()));
    }
    Ok(())
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn ss_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ss_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn ss_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Normalizes spacing and strips share boilerplate from an article.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ss_clean_article(text: *const c_char, out: *mut *mut c_char) -> SsStatus {
    guarded(|| {
        let text = read_str(text, "text")?;
        write_string(out, clean_article(text))
    })
}

/// Splits text into sentences, returned as a JSON array of strings.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ss_split_sentences_json(text: *const c_char, out: *mut *mut c_char) -> SsStatus {
    guarded(|| {
        let text = read_str(text, "text")?;
        let sentences: Vec<String> = split_sentences(text).into_iter().map(|s| s.text).collect();
        write_string(out, serde_json::to_string(&sentences).expect("strings serialize"))
    })
}

/// Overlap score of each of `n` samples against the whole set. A sample
/// without word tokens gets NaN.
///
/// # Safety
/// `samples` must point to `n` NUL-terminated strings and `out_scores` to
/// room for `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn ss_overlap_scores(
    samples: *const *const c_char,
    n: usize,
    out_scores: *mut f64,
) -> SsStatus {
    guarded(|| {
        if n == 0 {
            return Err(Failure::invalid("at least one sample is required"));
        }
        if samples.is_null() {
            return Err(Failure(SsStatus::NullPointer, "samples is null".into()));
        }
        check_out(out_scores)?;
        let texts = std::slice::from_raw_parts(samples, n);
        let mut tokens = Vec::with_capacity(n);
        for (i, &p) in texts.iter().enumerate() {
            tokens.push(word_token_strings(read_str(p, &format!("sample {i}"))?));
        }
        let out = std::slice::from_raw_parts_mut(out_scores, n);
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = overlap_score(i, &tokens).unwrap_or(f64::NAN);
        }
        Ok(())
    })
}

/// ROUGE-1 F1 between a candidate and a reference.
///
/// # Safety
/// Both strings must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ss_rouge1_f1(
    candidate: *const c_char,
    reference: *const c_char,
    out: *mut f64,
) -> SsStatus {
    guarded(|| {
        let c = read_str(candidate, "candidate")?;
        let r = read_str(reference, "reference")?;
        check_out(out)?;
        *out = sample_select::eval::rouge1_f1(c, r);
        Ok(())
    })
}

/// Grammaticality under the built-in offline tagger.
///
/// # Safety
/// `sentence` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ss_is_grammatical_heuristic(sentence: *const c_char, out: *mut bool) -> SsStatus {
    guarded(|| {
        let s = read_str(sentence, "sentence")?;
        check_out(out)?;
        *out = is_grammatical(&heuristic_parse(s));
        Ok(())
    })
}

/// Builds a decoder from TOML configuration text (the same format the CLI
/// reads). Release it with [`ss_decoder_free`].
///
/// # Safety
/// `config_toml` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ss_decoder_new(config_toml: *const c_char, out: *mut *mut SsDecoder) -> SsStatus {
    guarded(|| {
        let text = read_str(config_toml, "config")?;
        check_out(out)?;
        let cfg = RunConfig::from_toml(text).map_err(config_failure)?;
        let pipeline = Pipeline::from_config(&cfg).map_err(config_failure)?;
        *out = Box::into_raw(Box::new(SsDecoder { pipeline }));
        Ok(())
    })
}

fn config_failure(e: RunnerError) -> Failure {
    Failure(SsStatus::ConfigError, e.to_string())
}

/// Summarizes one document and writes its output line (JSON) to `out`.
/// `reference` may be null. When decoding fails the line is still written,
/// carrying an `error` field, and the call returns the run-error status.
///
/// # Safety
/// `decoder` must come from [`ss_decoder_new`]; strings must be
/// NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ss_decoder_summarize(
    decoder: *const SsDecoder,
    document_id: *const c_char,
    article: *const c_char,
    reference: *const c_char,
    out: *mut *mut c_char,
) -> SsStatus {
    guarded(|| {
        if decoder.is_null() {
            return Err(Failure(SsStatus::NullPointer, "decoder is null".into()));
        }
        let record = DatasetRecord {
            id: read_str(document_id, "document_id")?.to_string(),
            article: read_str(article, "article")?.to_string(),
            reference: if reference.is_null() { None } else { Some(read_str(reference, "reference")?.to_string()) },
        };
        check_out(out)?;
        let line = (*decoder).pipeline.process(&record);
        let error = line.error.clone();
        write_string(out, serde_json::to_string(&line).expect("output lines serialize"))?;
        match error {
            Some(e) => Err(Failure(SsStatus::RunError, e)),
            None => Ok(()),
        }
    })
}

/// Releases a decoder. Null is ignored.
///
/// # Safety
/// `decoder` must come from [`ss_decoder_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ss_decoder_free(decoder: *mut SsDecoder) {
    if !decoder.is_null() {
        drop(Box::from_raw(decoder));
    }
}
