//! Smoke tests exercising the C ABI from Rust: status codes, the
//! last-error channel, opaque model handles and the metric helpers.

use std::ffi::{c_char, CString};
use std::path::Path;
use std::ptr;

use upoc2_ffi::{
    upoc2_bleu, upoc2_cider, upoc2_gen_synthetic, upoc2_last_error_message, upoc2_model_free,
    upoc2_model_open, upoc2_translate_id, Upoc2Model, Upoc2Status,
};

fn last_error() -> String {
    unsafe {
        let need = upoc2_last_error_message(ptr::null_mut(), 0);
        let mut buf = vec![0u8; need + 1];
        upoc2_last_error_message(buf.as_mut_ptr() as *mut c_char, buf.len());
        buf.truncate(need);
        String::from_utf8(buf).unwrap()
    }
}

fn carray(strings: &[&str]) -> (Vec<CString>, Vec<*const c_char>) {
    let owned: Vec<CString> = strings.iter().map(|s| CString::new(*s).unwrap()).collect();
    let ptrs: Vec<*const c_char> = owned.iter().map(|s| s.as_ptr()).collect();
    (owned, ptrs)
}

#[test]
fn bleu_and_cider_over_c_strings() {
    let (_h, hyps) = carray(&["a b c d", "e f g h"]);
    let (_r, refs) = carray(&["a b c d", "e f g h"]);
    let mut score = -1.0;
    let code = unsafe { upoc2_bleu(hyps.as_ptr(), refs.as_ptr(), 2, &mut score) };
    assert_eq!(code, Upoc2Status::Ok);
    assert!((score - 1.0).abs() < 1e-12);

    let (_h3, hyps3) = carray(&["a b c d e", "f g h i j", "k l m n o"]);
    let (_r3, refs3) = carray(&["a b c d e", "f g h i j", "k l m n o"]);
    let code = unsafe { upoc2_cider(hyps3.as_ptr(), refs3.as_ptr(), 3, &mut score) };
    assert_eq!(code, Upoc2Status::Ok);
    assert!((score - 10.0).abs() < 1e-9, "{score}");
}

#[test]
fn null_arguments_set_a_readable_error() {
    let mut score = 0.0;
    let code = unsafe { upoc2_bleu(ptr::null(), ptr::null(), 1, &mut score) };
    assert_eq!(code, Upoc2Status::InvalidArgument);
    assert!(last_error().contains("hyps"), "{}", last_error());
}

#[test]
fn error_message_is_truncated_but_nul_terminated() {
    let code = unsafe { upoc2_model_open(ptr::null(), ptr::null(), ptr::null_mut()) };
    assert_eq!(code, Upoc2Status::InvalidArgument);
    let full = last_error();
    assert!(!full.is_empty());
    let mut small = [0i8; 4];
    let need = unsafe { upoc2_last_error_message(small.as_mut_ptr() as *mut c_char, small.len()) };
    assert_eq!(need, full.len());
    assert_eq!(small[3], 0);
    let head: String = small[..3].iter().map(|&b| b as u8 as char).collect();
    assert_eq!(head, full[..3]);
}

#[test]
fn gen_open_translate_free_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = CString::new(tmp.path().to_str().unwrap()).unwrap();
    let code = unsafe { upoc2_gen_synthetic(dir.as_ptr(), 30, 9) };
    assert_eq!(code, Upoc2Status::Ok);
    for name in ["corpus.jsonl", "features.bin", "splits.json"] {
        assert!(tmp.path().join(name).exists(), "{name} missing");
    }

    // a checkpoint with the same shape the loader reconstructs
    let ckpt = save_matching_checkpoint(tmp.path());
    let ckpt_c = CString::new(ckpt.to_str().unwrap()).unwrap();
    let mut model: *mut Upoc2Model = ptr::null_mut();
    let code = unsafe { upoc2_model_open(ckpt_c.as_ptr(), dir.as_ptr(), &mut model) };
    assert_eq!(code, Upoc2Status::Ok, "{}", last_error());
    assert!(!model.is_null());

    let id = CString::new("syn0").unwrap();
    let mut need = 0usize;
    let code =
        unsafe { upoc2_translate_id(model, id.as_ptr(), ptr::null_mut(), 0, &mut need) };
    assert_eq!(code, Upoc2Status::Ok, "{}", last_error());
    assert!(need >= 1);
    let mut buf = vec![0u8; need];
    let code = unsafe {
        upoc2_translate_id(model, id.as_ptr(), buf.as_mut_ptr() as *mut c_char, buf.len(), &mut need)
    };
    assert_eq!(code, Upoc2Status::Ok);
    let text = String::from_utf8(buf[..need - 1].to_vec()).unwrap();
    assert_eq!(text.len() + 1, need);

    let bad = CString::new("nope").unwrap();
    let code = unsafe { upoc2_translate_id(model, bad.as_ptr(), ptr::null_mut(), 0, &mut need) };
    assert_eq!(code, Upoc2Status::InvalidArgument);
    assert!(last_error().contains("nope"));

    unsafe { upoc2_model_free(model) };
    unsafe { upoc2_model_free(ptr::null_mut()) }; // NULL is a no-op
}

#[test]
fn missing_data_directory_reports_io_or_format() {
    let ckpt = CString::new("/nonexistent/model.ckpt").unwrap();
    let dir = CString::new("/nonexistent").unwrap();
    let mut model: *mut Upoc2Model = ptr::null_mut();
    let code = unsafe { upoc2_model_open(ckpt.as_ptr(), dir.as_ptr(), &mut model) };
    assert!(matches!(code, Upoc2Status::Io | Upoc2Status::Format), "{code:?}");
    assert!(model.is_null());
}

/// Build and save parameters shaped exactly like `upoc2_model_open`
/// reconstructs them for the generated corpus.
fn save_matching_checkpoint(dir: &Path) -> std::path::PathBuf {
    use upoc2_core::data::{build_vocab, load_corpus};
    use upoc2_core::model::{save_parameters, CkptPrecision, ModelConfig, Parameters};
    let corpus = load_corpus(
        &dir.join("corpus.jsonl"),
        &dir.join("features.bin"),
        Some(&dir.join("splits.json")),
    )
    .unwrap();
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
    let params = Parameters::init(&cfg, 0).unwrap();
    let path = dir.join("model.ckpt");
    save_parameters(&params, &path, CkptPrecision::F64).unwrap();
    path
}
