//! C ABI surface: opaque handles, integer error codes, and a
//! thread-local last-error message. The generated header lands in
//! `include/upoc2.h`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use upoc2_core::data::{build_vocab, load_corpus, write_synthetic_corpus, Corpus, SynthSpec, Vocabulary};
use upoc2_core::decode::{translate, DecodeConfig};
use upoc2_core::metrics::{bleu, cider};
use upoc2_core::model::{load_parameters, ModelConfig, Parameters};
use upoc2_core::Error;

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Upoc2Status {
    Ok = 0,
    InvalidArgument = 1,
    Io = 2,
    Format = 3,
    Internal = 4,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized: String = msg.chars().map(|c| if c == '\0' { ' ' } else { c }).collect();
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(sanitized).unwrap());
}

fn status_of(err: &Error) -> Upoc2Status {
    match err {
        Error::Config(_) | Error::Contract(_) | Error::ShapeMismatch { .. } | Error::IndexOutOfRange { .. } => {
            Upoc2Status::InvalidArgument
        }
        Error::Io(_) => Upoc2Status::Io,
        Error::Format { .. } | Error::Json(_) | Error::Load(_) => Upoc2Status::Format,
    }
}

fn fail(err: Error) -> Upoc2Status {
    let code = status_of(&err);
    set_error(&err.to_string());
    code
}

fn guard(f: impl FnOnce() -> Upoc2Status) -> Upoc2Status {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(code) => code,
        Err(_) => {
            set_error("internal panic");
            Upoc2Status::Internal
        }
    }
}

unsafe fn cstr<'a>(p: *const c_char, what: &str) -> Result<&'a str, Upoc2Status> {
    if p.is_null() {
        set_error(&format!("{what} is NULL"));
        return Err(Upoc2Status::InvalidArgument);
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error(&format!("{what} is not valid UTF-8"));
        Upoc2Status::InvalidArgument
    })
}

/// Copy the message from the most recent failure on this thread into
/// `buf` (NUL-terminated, truncated to `len`). Returns the full length.
#[no_mangle]
pub unsafe extern "C" fn upoc2_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes_with_nul();
        if !buf.is_null() && len > 0 {
            let n = (bytes.len() - 1).min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        bytes.len() - 1
    })
}

/// A loaded model together with the corpus it decodes against.
pub struct Upoc2Model {
    params: Parameters,
    cfg: ModelConfig,
    vocab: Vocabulary,
    corpus: Corpus,
}

/// Load a checkpoint plus the data directory (corpus.jsonl,
/// features.bin, splits.json) that defines its vocabulary.
///
/// On success `*out` owns the model; release it with
/// `upoc2_model_free`.
#[no_mangle]
pub unsafe extern "C" fn upoc2_model_open(
    ckpt_path: *const c_char,
    data_dir: *const c_char,
    out: *mut *mut Upoc2Model,
) -> Upoc2Status {
    guard(|| {
        if out.is_null() {
            set_error("out is NULL");
            return Upoc2Status::InvalidArgument;
        }
        let ckpt = match cstr(ckpt_path, "ckpt_path") {
            Ok(s) => s,
            Err(c) => return c,
        };
        let dir = match cstr(data_dir, "data_dir") {
            Ok(s) => Path::new(s),
            Err(c) => return c,
        };
        let corpus = match load_corpus(
            &dir.join("corpus.jsonl"),
            &dir.join("features.bin"),
            Some(&dir.join("splits.json")),
        ) {
            Ok(c) => c,
            Err(e) => return fail(e),
        };
        let lists: Vec<&[String]> = corpus
            .triplets
            .iter()
            .flat_map(|t| [t.src_tokens.as_slice(), t.tgt_tokens.as_slice()])
            .collect();
        let vocab = build_vocab(lists, 1);
        let mut cfg = ModelConfig::desk();
        cfg.d_img = corpus.d_img;
        cfg.v_vocab = vocab.len();
        cfg.v_attr = corpus.attribute_vocab.len().max(1);
        let params = match load_parameters(&cfg, Path::new(ckpt), 0) {
            Ok(p) => p,
            Err(e) => return fail(e),
        };
        *out = Box::into_raw(Box::new(Upoc2Model {
            params,
            cfg,
            vocab,
            corpus,
        }));
        Upoc2Status::Ok
    })
}

/// Release a model handle. NULL is a no-op.
#[no_mangle]
pub unsafe extern "C" fn upoc2_model_free(model: *mut Upoc2Model) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Translate the source sentence of the triplet `id` and write the
/// space-joined target tokens into `buf` (NUL-terminated, truncated to
/// `len`). Returns the required buffer size through `out_len`.
#[no_mangle]
pub unsafe extern "C" fn upoc2_translate_id(
    model: *const Upoc2Model,
    id: *const c_char,
    buf: *mut c_char,
    len: usize,
    out_len: *mut usize,
) -> Upoc2Status {
    guard(|| {
        if model.is_null() {
            set_error("model is NULL");
            return Upoc2Status::InvalidArgument;
        }
        let m = &*model;
        let id = match cstr(id, "id") {
            Ok(s) => s,
            Err(c) => return c,
        };
        let Some(&idx) = m.corpus.by_id.get(id) else {
            set_error(&format!("unknown triplet id {id:?}"));
            return Upoc2Status::InvalidArgument;
        };
        let t = &m.corpus.triplets[idx];
        let tr = match translate(
            &m.params,
            &m.cfg,
            &m.vocab,
            &t.image_features,
            &t.src_tokens,
            &DecodeConfig::default(),
        ) {
            Ok(tr) => tr,
            Err(e) => return fail(e),
        };
        let text = tr.tokens.join(" ");
        let bytes = text.as_bytes();
        if !out_len.is_null() {
            *out_len = bytes.len() + 1;
        }
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        Upoc2Status::Ok
    })
}

unsafe fn string_array<'a>(
    ptr_arr: *const *const c_char,
    n: usize,
    what: &str,
) -> Result<Vec<Vec<String>>, Upoc2Status> {
    if ptr_arr.is_null() {
        set_error(&format!("{what} is NULL"));
        return Err(Upoc2Status::InvalidArgument);
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let s = cstr(*ptr_arr.add(i), what)?;
        out.push(s.split_whitespace().map(str::to_string).collect());
    }
    Ok(out)
}

/// Corpus-level BLEU-4 over whitespace-tokenized segment strings.
/// `hyps` and `refs` are parallel arrays of length `n`.
#[no_mangle]
pub unsafe extern "C" fn upoc2_bleu(
    hyps: *const *const c_char,
    refs: *const *const c_char,
    n: usize,
    out: *mut f64,
) -> Upoc2Status {
    guard(|| {
        let hyps = match string_array(hyps, n, "hyps") {
            Ok(v) => v,
            Err(c) => return c,
        };
        let refs = match string_array(refs, n, "refs") {
            Ok(v) => v,
            Err(c) => return c,
        };
        match bleu(&hyps, &refs, 4) {
            Ok(report) => {
                if !out.is_null() {
                    *out = *report.bleu.last().unwrap_or(&0.0);
                }
                Upoc2Status::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Corpus-level CIDEr over whitespace-tokenized segment strings.
#[no_mangle]
pub unsafe extern "C" fn upoc2_cider(
    hyps: *const *const c_char,
    refs: *const *const c_char,
    n: usize,
    out: *mut f64,
) -> Upoc2Status {
    guard(|| {
        let hyps = match string_array(hyps, n, "hyps") {
            Ok(v) => v,
            Err(c) => return c,
        };
        let refs = match string_array(refs, n, "refs") {
            Ok(v) => v,
            Err(c) => return c,
        };
        let refs: Vec<Vec<Vec<String>>> = refs.into_iter().map(|r| vec![r]).collect();
        match cider(&hyps, &refs) {
            Ok(score) => {
                if !out.is_null() {
                    *out = score;
                }
                Upoc2Status::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Generate a synthetic corpus (corpus.jsonl, features.bin,
/// splits.json) under `out_dir`.
#[no_mangle]
pub unsafe extern "C" fn upoc2_gen_synthetic(
    out_dir: *const c_char,
    n_triplets: usize,
    seed: u64,
) -> Upoc2Status {
    guard(|| {
        let dir = match cstr(out_dir, "out_dir") {
            Ok(s) => s,
            Err(c) => return c,
        };
        let spec = SynthSpec {
            n_triplets,
            ..SynthSpec::default()
        };
        match write_synthetic_corpus(&spec, seed, Path::new(dir)) {
            Ok(_) => Upoc2Status::Ok,
            Err(e) => fail(e),
        }
    })
}
