//! C ABI for the futurelm toolkit.
//!
//! Conventions:
//! - Every fallible function returns an `int32_t` status: 0 on success,
//!   1 for invalid arguments (null pointers, bad sizes), 2 for runtime
//!   failures. On failure, [`flm_last_error`] returns a message.
//! - Handles are opaque; free them with the matching `*_free` function.
//! - The committed header lives at `include/futurelm.h`.

use futurelm::corpus::Vocabulary;
use futurelm::lm::{generate, next_token_dist, DecoderLM, DecodingConfig, ZeroBias};
use futurelm::metrics::meteor;
use futurelm::numerics::checkpoint;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;

pub const FLM_OK: i32 = 0;
pub const FLM_INVALID_ARGUMENT: i32 = 1;
pub const FLM_RUNTIME_ERROR: i32 = 2;

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

/// Like `slice::from_raw_parts`, but tolerates a null pointer when the
/// length is zero (callers pass NULL for empty inputs).
unsafe fn slice_or_empty<'a, T>(ptr: *const T, len: usize) -> &'a [T] {
    if len == 0 {
        &[]
    } else {
        std::slice::from_raw_parts(ptr, len)
    }
}

fn set_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(sanitized).unwrap());
}

/// Message for the most recent failure on this thread. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn flm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Language model plus the vocabulary it was trained with.
pub struct FlmModel {
    model: DecoderLM,
    vocab: Vocabulary,
}

/// Load a model checkpoint produced by the `futurelm train` command.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn flm_model_load(path: *const c_char, out: *mut *mut FlmModel) -> i32 {
    if path.is_null() || out.is_null() {
        set_error("null pointer argument");
        return FLM_INVALID_ARGUMENT;
    }
    let path = match CStr::from_ptr(path).to_str() {
        Ok(s) => s,
        Err(_) => {
            set_error("checkpoint path is not valid UTF-8");
            return FLM_INVALID_ARGUMENT;
        }
    };
    match load_model(Path::new(path)) {
        Ok(m) => {
            *out = Box::into_raw(Box::new(m));
            FLM_OK
        }
        Err(e) => {
            set_error(&e.to_string());
            FLM_RUNTIME_ERROR
        }
    }
}

fn load_model(path: &Path) -> futurelm::error::Result<FlmModel> {
    let ckpt = checkpoint::load(path)?;
    let config = serde_json::from_value(ckpt.meta["model"].clone()).map_err(|e| {
        futurelm::error::Error::Format(format!("checkpoint metadata lacks a model config: {e}"))
    })?;
    let vocab: Vocabulary = serde_json::from_value(ckpt.meta["vocab"].clone()).map_err(|e| {
        futurelm::error::Error::Format(format!("checkpoint metadata lacks a vocabulary: {e}"))
    })?;
    let model = DecoderLM::from_parts(config, ckpt.params)?;
    Ok(FlmModel { model, vocab })
}

/// Release a model handle. Passing NULL is a no-op.
///
/// # Safety
/// `model` must come from [`flm_model_load`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn flm_model_free(model: *mut FlmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Vocabulary size of a loaded model.
///
/// # Safety
/// `model` must be a live handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn flm_model_vocab_size(model: *const FlmModel, out: *mut usize) -> i32 {
    if model.is_null() || out.is_null() {
        set_error("null pointer argument");
        return FLM_INVALID_ARGUMENT;
    }
    *out = (*model).vocab.size();
    FLM_OK
}

/// Next-token distribution after `prefix` (token ids, no sentinel).
/// `out_probs` must hold `flm_model_vocab_size` doubles.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn flm_next_token_dist(
    model: *const FlmModel,
    prefix: *const u32,
    prefix_len: usize,
    out_probs: *mut f64,
) -> i32 {
    if model.is_null() || out_probs.is_null() || (prefix.is_null() && prefix_len > 0) {
        set_error("null pointer argument");
        return FLM_INVALID_ARGUMENT;
    }
    let handle = &*model;
    let prefix = slice_or_empty(prefix, prefix_len);
    match next_token_dist(&handle.model, &ZeroBias, 0, prefix) {
        Ok(probs) => {
            std::ptr::copy_nonoverlapping(probs.as_ptr(), out_probs, probs.len());
            FLM_OK
        }
        Err(e) => {
            set_error(&e.to_string());
            FLM_RUNTIME_ERROR
        }
    }
}

/// Generate up to `cap` tokens with the default decoding settings and the
/// given seed; the number written is stored in `out_len`.
///
/// # Safety
/// Pointers must be valid for the stated capacities.
#[no_mangle]
pub unsafe extern "C" fn flm_generate(
    model: *const FlmModel,
    year: i32,
    seed: u64,
    out_tokens: *mut u32,
    cap: usize,
    out_len: *mut usize,
) -> i32 {
    if model.is_null() || out_tokens.is_null() || out_len.is_null() || cap == 0 {
        set_error("null pointer argument or zero capacity");
        return FLM_INVALID_ARGUMENT;
    }
    let handle = &*model;
    let cfg = DecodingConfig {
        seed,
        max_tokens: cap,
        ..DecodingConfig::default()
    };
    match generate(&handle.model, &ZeroBias, year, &cfg) {
        Ok(tokens) => {
            let n = tokens.len().min(cap);
            std::ptr::copy_nonoverlapping(tokens.as_ptr(), out_tokens, n);
            *out_len = n;
            FLM_OK
        }
        Err(e) => {
            set_error(&e.to_string());
            FLM_RUNTIME_ERROR
        }
    }
}

/// Render token ids as space-separated words into `buf` (NUL-terminated).
/// `out_len` receives the full string length excluding the NUL; if it is
/// >= `cap` the output was truncated.
///
/// # Safety
/// Pointers must be valid for the stated capacities.
#[no_mangle]
pub unsafe extern "C" fn flm_decode_text(
    model: *const FlmModel,
    tokens: *const u32,
    n_tokens: usize,
    buf: *mut c_char,
    cap: usize,
    out_len: *mut usize,
) -> i32 {
    if model.is_null() || buf.is_null() || out_len.is_null() || cap == 0
        || (tokens.is_null() && n_tokens > 0)
    {
        set_error("null pointer argument or zero capacity");
        return FLM_INVALID_ARGUMENT;
    }
    let handle = &*model;
    let tokens = slice_or_empty(tokens, n_tokens);
    let text = handle.vocab.decode(tokens).replace('\0', " ");
    let bytes = text.as_bytes();
    *out_len = bytes.len();
    let n = bytes.len().min(cap - 1);
    std::ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
    *buf.add(n) = 0;
    FLM_OK
}

/// Alignment-based similarity of two token sequences in [0, 1].
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn flm_meteor(
    a: *const u32,
    a_len: usize,
    b: *const u32,
    b_len: usize,
) -> f64 {
    if (a.is_null() && a_len > 0) || (b.is_null() && b_len > 0) {
        return -1.0;
    }
    let a = slice_or_empty(a, a_len);
    let b = slice_or_empty(b, b_len);
    meteor(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use futurelm::corpus::{split_by_year, Document, TemporalCorpus};
    use futurelm::lm::{train, DecoderConfig, TrainConfig};
    use futurelm::numerics::checkpoint::Checkpoint;
    use std::collections::BTreeSet;
    use std::ffi::CString;

    fn train_and_save(dir: &Path) -> std::path::PathBuf {
        let docs: Vec<Document> = (1..=4)
            .flat_map(|y| {
                (0..3).map(move |i| Document {
                    year: y,
                    tokens: Vec::new(),
                    raw_text: format!("model year y{y} sample {i} words"),
                })
            })
            .collect();
        let corpus = TemporalCorpus::from_documents(docs);
        let years: BTreeSet<i32> = [1, 2].into();
        let (tr, dev, _te) = split_by_year(&corpus, &years, 3, 4, 100, 1).unwrap();
        let vocab = tr.vocabulary.clone().unwrap();
        let cfg = DecoderConfig {
            layers: 1,
            heads: 2,
            d_model: 8,
            d_ff: 16,
            max_len: 16,
            dropout: 0.0,
            vocab_size: vocab.size(),
        };
        let mut model = DecoderLM::new(cfg.clone(), 3).unwrap();
        let tcfg = TrainConfig {
            epochs: 1,
            batch_size: 2,
            grad_accum: 1,
            ..TrainConfig::default()
        };
        let res = futurelm::bias::HeadResources {
            freq: None,
            embeddings: None,
        };
        train(&mut model, None, &res, &tr, &dev, &tcfg).unwrap();
        let path = dir.join("model.ckpt");
        checkpoint::save(
            &path,
            &Checkpoint {
                digest: "test".into(),
                meta: serde_json::json!({"model": cfg, "vocab": vocab}),
                params: model.params.clone(),
                adam: None,
            },
        )
        .unwrap();
        path
    }

    #[test]
    fn load_query_generate_free() {
        let dir = tempfile::tempdir().unwrap();
        let path = train_and_save(dir.path());
        let cpath = CString::new(path.to_str().unwrap()).unwrap();
        unsafe {
            let mut handle: *mut FlmModel = std::ptr::null_mut();
            assert_eq!(flm_model_load(cpath.as_ptr(), &mut handle), FLM_OK);
            let mut v = 0usize;
            assert_eq!(flm_model_vocab_size(handle, &mut v), FLM_OK);
            assert!(v > 2);

            let mut probs = vec![0.0f64; v];
            assert_eq!(
                flm_next_token_dist(handle, std::ptr::null(), 0, probs.as_mut_ptr()),
                FLM_OK
            );
            let sum: f64 = probs.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);

            let mut tokens = vec![0u32; 8];
            let mut n = 0usize;
            assert_eq!(
                flm_generate(handle, 3, 1, tokens.as_mut_ptr(), tokens.len(), &mut n),
                FLM_OK
            );
            assert!(n <= tokens.len());

            let mut buf = vec![0i8; 256];
            let mut len = 0usize;
            assert_eq!(
                flm_decode_text(handle, tokens.as_ptr(), n, buf.as_mut_ptr() as *mut c_char, buf.len(), &mut len),
                FLM_OK
            );

            flm_model_free(handle);
        }
    }

    #[test]
    fn null_arguments_are_rejected_with_message() {
        unsafe {
            let mut handle: *mut FlmModel = std::ptr::null_mut();
            assert_eq!(
                flm_model_load(std::ptr::null(), &mut handle),
                FLM_INVALID_ARGUMENT
            );
            let msg = CStr::from_ptr(flm_last_error()).to_str().unwrap();
            assert!(!msg.is_empty());
            // missing file is a runtime error, not an argument error
            let cpath = CString::new("/nonexistent/model.ckpt").unwrap();
            assert_eq!(
                flm_model_load(cpath.as_ptr(), &mut handle),
                FLM_RUNTIME_ERROR
            );
        }
    }

    #[test]
    fn meteor_through_the_abi() {
        let a = [1u32, 2, 3, 4];
        unsafe {
            let s = flm_meteor(a.as_ptr(), a.len(), a.as_ptr(), a.len());
            assert!((s - (1.0 - 0.5 / 64.0)).abs() < 1e-12);
            assert_eq!(flm_meteor(std::ptr::null(), 1, a.as_ptr(), 4), -1.0);
        }
    }
}
