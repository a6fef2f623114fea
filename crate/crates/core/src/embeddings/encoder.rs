//! Deterministic stand-ins for the frozen pretrained encoders: fixed seeded
//! projections of log-mel features.

use std::sync::OnceLock;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{EmbeddingSequence, Matrix, SpeakerEmbedding, SPEAKER_DIM, SPEECH_DIM};
use crate::audio::{log_mel_frames, log_mel_spectrogram, stft, Waveform, Window};
use crate::error::{domain, Result};

pub const SPEECH_PROJECTION_SEED: u64 = 0x5EED_0512;
pub const SPEAKER_PROJECTION_SEED: u64 = 0x5EED_0192;

const N_MELS: usize = 80;
const FRAME_LEN: usize = 400;
const HOP: usize = 160;
const LOG_FLOOR: f64 = 1e-5;
const LAYER_NORM_EPS: f64 = 1e-5;
/// Output hop of the speech encoder after frame pairing.
pub const SPEECH_FRAME_HOP_MS: f64 = 20.0;

/// `rows × cols` matrix with orthonormal columns, drawn from a seeded
/// Gaussian and orthogonalised by QR.
fn orthonormal_projection(rows: usize, cols: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::<f64>::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng));
    let q = g.qr().q();
    (0..rows).flat_map(|r| (0..cols).map(move |c| (r, c))).map(|(r, c)| q[(r, c)]).collect()
}

fn speech_projection() -> &'static [f64] {
    static P: OnceLock<Vec<f64>> = OnceLock::new();
    P.get_or_init(|| orthonormal_projection(SPEECH_DIM, 2 * N_MELS, SPEECH_PROJECTION_SEED))
}

fn speaker_projection() -> &'static [f64] {
    static P: OnceLock<Vec<f64>> = OnceLock::new();
    P.get_or_init(|| orthonormal_projection(SPEAKER_DIM, 2 * N_MELS, SPEAKER_PROJECTION_SEED))
}

fn project(p: &[f64], x: &[f64]) -> Vec<f64> {
    p.chunks(x.len()).map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}

fn require_16k(w: &Waveform, min_ms: f64, what: &str) -> Result<()> {
    if w.sample_rate_hz != crate::audio::CANONICAL_SAMPLE_RATE {
        return Err(domain!("{what} expects 16 kHz audio, got {} Hz", w.sample_rate_hz));
    }
    if w.duration_secs() * 1000.0 < min_ms - 1e-9 {
        return Err(domain!("{what} needs at least {min_ms} ms of audio"));
    }
    if !w.is_finite() {
        return Err(domain!("{what} got non-finite samples"));
    }
    Ok(())
}

/// Frame-level speech features: 80-bin log-mel (25 ms / 10 ms), consecutive
/// frame pairs stacked to 160-d, projected to 512-d, layer-normalised.
///
/// A single analysis frame is paired with itself.
pub fn synth_speech_encode(w: &Waveform) -> Result<EmbeddingSequence> {
    require_16k(w, 25.0, "speech encoder")?;
    let mel = log_mel_spectrogram(w, FRAME_LEN, HOP, N_MELS, LOG_FLOOR)?;
    let n = (mel.len() / 2).max(1);
    let p = speech_projection();
    let mut data = Vec::with_capacity(n * SPEECH_DIM);
    for i in 0..n {
        let second = (2 * i + 1).min(mel.len() - 1);
        let stacked: Vec<f64> = mel[2 * i].iter().chain(&mel[second]).copied().collect();
        let y = project(p, &stacked);
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / y.len() as f64;
        let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        data.extend(y.iter().map(|v| ((v - mean) * inv) as f32));
    }
    EmbeddingSequence::new(Matrix::new(n, SPEECH_DIM, data)?, SPEECH_FRAME_HOP_MS)
}

/// Utterance-level voice features: per-bin mean and standard deviation of
/// the log-mel over time, projected to 192-d and L2-normalised.
///
/// The mean vector is centred across bins, which removes overall level;
/// frames are placed symmetrically with a symmetric window, so reversing
/// the waveform leaves the statistics unchanged whenever the leftover
/// samples split evenly.
pub fn synth_speaker_encode(w: &Waveform) -> Result<SpeakerEmbedding> {
    require_16k(w, 100.0, "speaker encoder")?;
    let spare = (w.len() - FRAME_LEN) % HOP;
    let start = spare / 2;
    let trimmed = Waveform::new(w.samples[start..w.len() - (spare - start)].to_vec(), w.sample_rate_hz);
    let spec = stft(&trimmed, FRAME_LEN, HOP, Window::SymmetricHann)?;
    let mel = log_mel_frames(&spec, w.sample_rate_hz, N_MELS, LOG_FLOOR);
    let t = mel.len() as f64;
    let mut mean = vec![0.0; N_MELS];
    for frame in &mel {
        mean.iter_mut().zip(frame).for_each(|(m, v)| *m += v / t);
    }
    let mut std = vec![0.0; N_MELS];
    for frame in &mel {
        std.iter_mut().zip(frame).zip(&mean).for_each(|((s, v), m)| *s += (v - m).powi(2) / t);
    }
    std.iter_mut().for_each(|s| *s = s.sqrt());
    let level = mean.iter().sum::<f64>() / N_MELS as f64;
    mean.iter_mut().for_each(|m| *m -= level);

    let stats: Vec<f64> = mean.into_iter().chain(std).collect();
    let y = project(speaker_projection(), &stats);
    let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(domain!("speaker statistics vanished"));
    }
    SpeakerEmbedding::new(y.iter().map(|v| (v / norm) as f32).collect())
}
