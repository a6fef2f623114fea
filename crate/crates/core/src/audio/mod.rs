//! Waveform container and the DSP substrate shared by every augmentation:
//! WAV I/O, resampling, STFT and mel features, Butterworth filter banks,
//! envelope extraction and LPC formant tracking.

pub(crate) mod filter;
mod formant;
mod resample;
mod spectral;
mod wav;

pub use filter::{bandpass_bank, envelope, BandSpec, Biquad, SosFilter, DEFAULT_ENVELOPE_CUTOFF_HZ};
pub use formant::{formant_tracks, FormantTrack, LPC_ORDER};
pub use resample::resample;
pub use spectral::{log_mel_frames, log_mel_spectrogram, mel_filterbank, stft, ComplexSpectrogram, Window};
pub use wav::{read_wav, write_wav, wav_bytes};

use crate::error::{domain, Result};

/// Sample rate every corpus is converted to on ingest.
pub const CANONICAL_SAMPLE_RATE: u32 = 16_000;

/// Mono audio with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f32>,
    pub sample_rate_hz: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f32>, sample_rate_hz: u32) -> Self {
        Self {
            samples,
            sample_rate_hz,
        }
    }

    pub fn zeros(len: usize, sample_rate_hz: u32) -> Self {
        Self::new(vec![0.0; len], sample_rate_hz)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    pub fn nyquist_hz(&self) -> f64 {
        self.sample_rate_hz as f64 / 2.0
    }

    /// Samples widened to f64 for filtering.
    pub fn to_f64(&self) -> Vec<f64> {
        self.samples.iter().map(|&s| s as f64).collect()
    }

    pub fn from_f64(samples: &[f64], sample_rate_hz: u32) -> Self {
        Self::new(samples.iter().map(|&s| s as f32).collect(), sample_rate_hz)
    }

    pub fn scaled(&self, gain: f32) -> Self {
        Self::new(
            self.samples.iter().map(|s| s * gain).collect(),
            self.sample_rate_hz,
        )
    }

    pub fn reversed(&self) -> Self {
        let mut samples = self.samples.clone();
        samples.reverse();
        Self::new(samples, self.sample_rate_hz)
    }

    pub fn peak(&self) -> f32 {
        self.samples.iter().fold(0.0f32, |m, s| m.max(s.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.samples.iter().all(|s| s.is_finite())
    }
}

/// Root mean square of the samples, accumulated in f64.
pub fn rms(w: &Waveform) -> Result<f64> {
    if w.is_empty() {
        return Err(domain!("rms of an empty waveform"));
    }
    Ok(rms_f64(&w.to_f64()))
}

pub(crate) fn rms_f64(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

/// Repeat `x` cyclically (or cut it) to exactly `len` samples.
pub(crate) fn loop_to_len(x: &[f64], len: usize) -> Vec<f64> {
    if x.is_empty() {
        return vec![0.0; len];
    }
    (0..len).map(|i| x[i % x.len()]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn rms_of_zeros_and_constant() {
        assert_eq!(rms(&Waveform::zeros(100, 16_000)).unwrap(), 0.0);
        let w = Waveform::new(vec![0.5; 64], 16_000);
        assert!((rms(&w).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rms_of_full_scale_sine() {
        // 1 kHz at 16 kHz: 16 samples per period, 1000 whole periods.
        let samples: Vec<f32> = (0..16_000)
            .map(|i| (2.0 * PI * 1000.0 * i as f64 / 16_000.0).sin() as f32)
            .collect();
        let r = rms(&Waveform::new(samples, 16_000)).unwrap();
        assert!((r - 1.0 / 2f64.sqrt()).abs() < 1e-3, "rms {r}");
    }

    #[test]
    fn rms_rejects_empty() {
        assert!(rms(&Waveform::zeros(0, 16_000)).is_err());
    }

    #[test]
    fn looping_wraps_around() {
        assert_eq!(loop_to_len(&[1.0, 2.0, 3.0], 7), vec![1.0, 2.0, 3.0, 1.0, 2.0, 3.0, 1.0]);
        assert_eq!(loop_to_len(&[1.0, 2.0, 3.0], 2), vec![1.0, 2.0]);
    }
}
