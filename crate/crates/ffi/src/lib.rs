//! C interface to `joint-asr`.
//!
//! Every function returns a [`JasStatus`]. On failure a message describing
//! the error is kept per thread and can be read with [`jas_last_error`].
//! Models are opaque [`JasModel`] handles released with [`jas_model_free`];
//! strings returned through out-parameters are released with
//! [`jas_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use joint_asr::audio::{resample, Waveform, CANONICAL_SAMPLE_RATE};
use joint_asr::augment::{mix_at_snr, SnrSpec};
use joint_asr::losses::{argmax, cer, ctc_greedy_decode};
use joint_asr::model::{load_checkpoint, Checkpoint, JointModel, ModelConfig, Preset};
use joint_asr::training::{normalize_text, waveform_features};
use joint_asr::Error;

/// Result of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JasStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Domain = 3,
    Format = 4,
    Unsupported = 5,
    Infeasible = 6,
    Config = 7,
    Normalization = 8,
    Load = 9,
    Divergence = 10,
    Io = 11,
    Panic = 12,
}

/// A loaded or freshly initialised model with its speaker labels.
pub struct JasModel {
    inner: Checkpoint,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> JasStatus {
    match e {
        Error::Domain(_) => JasStatus::Domain,
        Error::Format(_) => JasStatus::Format,
        Error::Unsupported(_) => JasStatus::Unsupported,
        Error::Infeasible { .. } => JasStatus::Infeasible,
        Error::Config(_) => JasStatus::Config,
        Error::Normalization(_) => JasStatus::Normalization,
        Error::Load { .. } => JasStatus::Load,
        Error::Divergence(_) => JasStatus::Divergence,
        Error::Io { .. } => JasStatus::Io,
    }
}

struct Fail(JasStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> JasStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => JasStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("panic inside joint-asr".into());
            JasStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(JasStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(JasStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn samples_arg(p: *const f32, len: usize, sample_rate_hz: u32, what: &str) -> Result<Waveform, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    let samples = std::slice::from_raw_parts(p, len).to_vec();
    let w = Waveform::new(samples, sample_rate_hz);
    Ok(resample(&w, CANONICAL_SAMPLE_RATE)?)
}

fn owned_string(s: &str) -> *mut c_char {
    CString::new(s.replace('\0', " ")).map_or(ptr::null_mut(), CString::into_raw)
}

/// Copy the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len - 1` bytes). Returns the full message length, or 0
/// when no error has been recorded.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn jas_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else {
            return 0;
        };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Load a checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn jas_model_load(path: *const c_char, out: *mut *mut JasModel) -> JasStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = str_arg(path, "path")?;
        let inner = load_checkpoint(path)?;
        *out = Box::into_raw(Box::new(JasModel { inner }));
        Ok(())
    })
}

/// Initialise an untrained model from a named preset (`v1`, `v2`, `v3`,
/// `tiny`). Speakers are labelled `spk000`, `spk001`, ...
///
/// # Safety
/// `preset` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn jas_model_init(
    preset: *const c_char,
    n_speakers: usize,
    speech_only: bool,
    seed: u64,
    out: *mut *mut JasModel,
) -> JasStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let preset: Preset = str_arg(preset, "preset")?.parse()?;
        let mut config = ModelConfig::preset(preset);
        if speech_only {
            config = config.ablation();
        }
        config.n_speakers = n_speakers;
        let model = JointModel::init(config, seed)?;
        let speakers = (0..n_speakers).map(|i| format!("spk{i:03}")).collect();
        *out = Box::into_raw(Box::new(JasModel {
            inner: Checkpoint { model, speakers },
        }));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn jas_model_free(model: *mut JasModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of trainable parameters.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn jas_model_n_parameters(model: *const JasModel, out: *mut usize) -> JasStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = model.inner.model.n_parameters();
        Ok(())
    })
}

/// Transcribe mono float samples and, for joint models, identify the
/// speaker. Audio at any rate is resampled to 16 kHz. `out_speaker` may be
/// null; it receives null for speech-only models.
///
/// # Safety
/// `samples` must point to `len` floats; `model` must be a live handle;
/// `out_text` must be writable and `out_speaker` null or writable.
#[no_mangle]
pub unsafe extern "C" fn jas_model_recognize(
    model: *const JasModel,
    samples: *const f32,
    len: usize,
    sample_rate_hz: u32,
    out_text: *mut *mut c_char,
    out_speaker: *mut *mut c_char,
) -> JasStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        if out_text.is_null() {
            return Err(null("out_text"));
        }
        let w = samples_arg(samples, len, sample_rate_hz, "samples")?;
        let m = &model.inner.model;
        let out = m.infer(&waveform_features(&w, m.config.use_speaker_branch)?)?;
        let speaker = out
            .speaker_logits
            .as_ref()
            .and_then(|s| model.inner.speakers.get(argmax(s)))
            .map_or(ptr::null_mut(), |s| owned_string(s));
        *out_text = owned_string(&ctc_greedy_decode(&out.speech_logits));
        if out_speaker.is_null() {
            jas_string_free(speaker);
        } else {
            *out_speaker = speaker;
        }
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a string returned by this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn jas_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Character error rate of `hypothesis` against `reference` after text
/// normalisation.
///
/// # Safety
/// Both strings must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn jas_cer(reference: *const c_char, hypothesis: *const c_char, out: *mut f64) -> JasStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let reference = normalize_text(str_arg(reference, "reference")?)?;
        let hypothesis = match normalize_text(str_arg(hypothesis, "hypothesis")?) {
            Ok(h) => h,
            Err(Error::Normalization(_)) => String::new(),
            Err(e) => return Err(e.into()),
        };
        *out = cer(&reference, &hypothesis)?;
        Ok(())
    })
}

/// Mix `noise` into `signal` (same rate) at `snr_db`; pass `INFINITY` for the
/// untouched signal. Writes `signal_len` samples to `out`.
///
/// # Safety
/// `signal` and `out` must hold `signal_len` floats, `noise` `noise_len`.
#[no_mangle]
pub unsafe extern "C" fn jas_mix_at_snr(
    signal: *const f32,
    signal_len: usize,
    noise: *const f32,
    noise_len: usize,
    sample_rate_hz: u32,
    snr_db: f64,
    out: *mut f32,
) -> JasStatus {
    guard(|| {
        if signal.is_null() || noise.is_null() || out.is_null() {
            return Err(null("signal, noise or out"));
        }
        let s = Waveform::new(std::slice::from_raw_parts(signal, signal_len).to_vec(), sample_rate_hz);
        let n = Waveform::new(std::slice::from_raw_parts(noise, noise_len).to_vec(), sample_rate_hz);
        let snr = if snr_db == f64::INFINITY {
            SnrSpec::Infinite
        } else {
            SnrSpec::db(snr_db)?
        };
        let mixed = mix_at_snr(&s, &n, snr)?.mixed;
        std::slice::from_raw_parts_mut(out, signal_len).copy_from_slice(&mixed.samples);
        Ok(())
    })
}
