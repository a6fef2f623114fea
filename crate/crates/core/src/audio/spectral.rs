use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::Waveform;
use crate::error::{domain, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Window {
    #[default]
    Hann,
    Hamming,
    Rectangular,
    /// Hann window symmetric about its centre, so a time-reversed frame
    /// has the same magnitude spectrum.
    SymmetricHann,
}

impl Window {
    /// Window of length `n`; all but [`Window::SymmetricHann`] are periodic.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| {
                let phase = 2.0 * PI * i as f64 / n as f64;
                match self {
                    Window::Hann => 0.5 - 0.5 * phase.cos(),
                    Window::Hamming => 0.54 - 0.46 * phase.cos(),
                    Window::Rectangular => 1.0,
                    Window::SymmetricHann if n > 1 => 0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1) as f64).cos(),
                    Window::SymmetricHann => 1.0,
                }
            })
            .collect()
    }
}

/// Frames of windowed DFTs, stored row-major as `n_frames × n_bins`.
#[derive(Debug, Clone)]
pub struct ComplexSpectrogram {
    pub data: Vec<Complex<f64>>,
    pub n_frames: usize,
    pub n_bins: usize,
    pub frame_len: usize,
    pub hop: usize,
    pub window: Window,
}

impl ComplexSpectrogram {
    pub fn frame(&self, t: usize) -> &[Complex<f64>] {
        &self.data[t * self.n_bins..(t + 1) * self.n_bins]
    }

    pub fn power(&self, t: usize) -> Vec<f64> {
        self.frame(t).iter().map(|c| c.norm_sqr()).collect()
    }
}

pub(crate) fn frame_count(len: usize, frame_len: usize, hop: usize) -> usize {
    if len < frame_len {
        0
    } else {
        1 + (len - frame_len) / hop
    }
}

/// Short-time Fourier transform with `1 + (len - frame_len) / hop` frames
/// and `frame_len / 2 + 1` bins per frame. No padding is applied.
pub fn stft(w: &Waveform, frame_len: usize, hop: usize, window: Window) -> Result<ComplexSpectrogram> {
    if hop == 0 || frame_len < hop {
        return Err(domain!("stft needs frame_len >= hop > 0 (frame {frame_len}, hop {hop})"));
    }
    if w.len() < frame_len {
        return Err(domain!("signal of {} samples is shorter than one frame of {frame_len}", w.len()));
    }
    let n_frames = frame_count(w.len(), frame_len, hop);
    let n_bins = frame_len / 2 + 1;
    let win = window.coefficients(frame_len);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(frame_len);
    let mut data = Vec::with_capacity(n_frames * n_bins);
    let mut buf = vec![Complex::new(0.0, 0.0); frame_len];
    for t in 0..n_frames {
        let start = t * hop;
        for (i, b) in buf.iter_mut().enumerate() {
            *b = Complex::new(w.samples[start + i] as f64 * win[i], 0.0);
        }
        fft.process(&mut buf);
        data.extend_from_slice(&buf[..n_bins]);
    }
    Ok(ComplexSpectrogram {
        data,
        n_frames,
        n_bins,
        frame_len,
        hop,
        window,
    })
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular HTK-scale filters, `n_mels × (n_fft / 2 + 1)`, row-major.
pub fn mel_filterbank(n_mels: usize, n_fft: usize, sample_rate: u32, fmin: f64, fmax: f64) -> Vec<f64> {
    let n_bins = n_fft / 2 + 1;
    let lo = hz_to_mel(fmin);
    let hi = hz_to_mel(fmax);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bin_hz = sample_rate as f64 / n_fft as f64;
    let mut fb = vec![0.0; n_mels * n_bins];
    for m in 0..n_mels {
        let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
        for k in 0..n_bins {
            let f = k as f64 * bin_hz;
            let v = if f > left && f <= center {
                (f - left) / (center - left)
            } else if f > center && f < right {
                (right - f) / (right - center)
            } else {
                0.0
            };
            fb[m * n_bins + k] = v;
        }
    }
    fb
}

/// Natural-log mel energies with an additive floor, `n_frames` rows of `n_mels`.
pub fn log_mel_spectrogram(
    w: &Waveform,
    frame_len: usize,
    hop: usize,
    n_mels: usize,
    floor: f64,
) -> Result<Vec<Vec<f64>>> {
    let spec = stft(w, frame_len, hop, Window::Hann)?;
    Ok(log_mel_frames(&spec, w.sample_rate_hz, n_mels, floor))
}

/// Log-mel energies of an existing spectrogram.
pub fn log_mel_frames(spec: &ComplexSpectrogram, sample_rate_hz: u32, n_mels: usize, floor: f64) -> Vec<Vec<f64>> {
    let fb = mel_filterbank(n_mels, spec.frame_len, sample_rate_hz, 0.0, sample_rate_hz as f64 / 2.0);
    let n_bins = spec.n_bins;
    (0..spec.n_frames)
        .map(|t| {
            let p = spec.power(t);
            (0..n_mels)
                .map(|m| {
                    let e: f64 = fb[m * n_bins..(m + 1) * n_bins]
                        .iter()
                        .zip(&p)
                        .map(|(a, b)| a * b)
                        .sum();
                    (e + floor).ln()
                })
                .collect()
        })
        .collect()
}
