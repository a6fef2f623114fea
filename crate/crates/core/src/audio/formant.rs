use std::f64::consts::PI;

use nalgebra::DMatrix;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{Waveform, Window};
use crate::error::{domain, Result};

pub const LPC_ORDER: usize = 12;
const PRE_EMPHASIS: f64 = 0.97;
const MAX_BANDWIDTH_HZ: f64 = 400.0;
const MIN_FORMANT_HZ: f64 = 60.0;
const AMPLITUDE_HALF_BAND_HZ: f64 = 100.0;
// Frames quieter than this RMS are treated as silent.
const SILENCE_RMS: f64 = 1e-5;
// White-noise correction on r[0], a -40 dB floor that keeps Levinson
// well conditioned on pure tones.
const NOISE_FLOOR: f64 = 1e-4;
const AMPLITUDE_FFT: usize = 1024;

/// One formant trajectory sampled every `hop` samples.
///
/// Frame `i` covers samples `[i * hop, i * hop + frame_len)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FormantTrack {
    pub frequency_hz: Vec<f64>,
    pub amplitude: Vec<f64>,
    pub hop: usize,
    pub frame_len: usize,
    pub sample_rate_hz: u32,
}

impl FormantTrack {
    pub fn n_frames(&self) -> usize {
        self.frequency_hz.len()
    }

    /// Sample index at the centre of frame `i`.
    pub fn frame_center(&self, i: usize) -> f64 {
        (i * self.hop) as f64 + self.frame_len as f64 / 2.0
    }

    /// Median frequency over frames with non-zero amplitude.
    pub fn median_voiced_frequency(&self) -> Option<f64> {
        let mut f: Vec<f64> = self
            .frequency_hz
            .iter()
            .zip(&self.amplitude)
            .filter(|(_, &a)| a > 0.0)
            .map(|(&f, _)| f)
            .collect();
        if f.is_empty() {
            return None;
        }
        f.sort_by(f64::total_cmp);
        let m = f.len() / 2;
        Some(if f.len() % 2 == 1 { f[m] } else { 0.5 * (f[m - 1] + f[m]) })
    }
}

/// Levinson-Durbin recursion. Returns `[1, a1, ..., a_order]` for the
/// inverse filter `A(z) = 1 + sum a_k z^-k`.
pub(crate) fn levinson(r: &[f64], order: usize) -> Vec<f64> {
    let mut a = vec![0.0; order + 1];
    a[0] = 1.0;
    let mut err = r[0];
    if err <= 0.0 {
        return a;
    }
    for i in 1..=order {
        let acc: f64 = (0..i).map(|j| a[j] * r[i - j]).sum();
        let k = -acc / err;
        let prev = a.clone();
        for j in 1..i {
            a[j] = prev[j] + k * prev[i - j];
        }
        a[i] = k;
        err *= 1.0 - k * k;
        if err <= 0.0 {
            break;
        }
    }
    a
}

/// Roots of `z^n + c1 z^(n-1) + ... + cn` from the companion matrix.
pub(crate) fn polynomial_roots(coeffs: &[f64]) -> Vec<Complex<f64>> {
    let n = coeffs.len() - 1;
    if n == 0 {
        return Vec::new();
    }
    let mut m = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        m[(0, j)] = -coeffs[j + 1];
    }
    for i in 1..n {
        m[(i, i - 1)] = 1.0;
    }
    m.complex_eigenvalues()
        .iter()
        .map(|c| Complex::new(c.re, c.im))
        .collect()
}

fn frame_formants(frame: &[f64], window: &[f64], sample_rate: f64) -> Vec<f64> {
    let xw: Vec<f64> = frame.iter().zip(window).map(|(x, w)| x * w).collect();
    let mut r: Vec<f64> = (0..=LPC_ORDER)
        .map(|lag| xw[..xw.len() - lag].iter().zip(&xw[lag..]).map(|(a, b)| a * b).sum())
        .collect();
    r[0] *= 1.0 + NOISE_FLOOR;
    let a = levinson(&r, LPC_ORDER);
    let nyq = sample_rate / 2.0;
    let mut formants: Vec<f64> = polynomial_roots(&a)
        .into_iter()
        .filter(|z| z.im > 0.0)
        .filter_map(|z| {
            let freq = z.arg() * sample_rate / (2.0 * PI);
            let bw = -z.norm().ln() * sample_rate / PI;
            (bw < MAX_BANDWIDTH_HZ && freq > MIN_FORMANT_HZ && freq < nyq - MIN_FORMANT_HZ).then_some(freq)
        })
        .collect();
    formants.sort_by(f64::total_cmp);
    formants
}

/// Sinusoid-equivalent amplitude of the energy within ±100 Hz of `center`.
fn band_amplitude(power: &[f64], center: f64, bin_hz: f64, norm: f64) -> f64 {
    let lo = ((center - AMPLITUDE_HALF_BAND_HZ) / bin_hz).ceil().max(0.0) as usize;
    let hi = (((center + AMPLITUDE_HALF_BAND_HZ) / bin_hz).floor() as usize).min(power.len() - 1);
    if lo > hi {
        return 0.0;
    }
    let e: f64 = power[lo..=hi].iter().sum();
    (4.0 * e / norm).sqrt()
}

/// LPC formant tracking: 25 ms Hann frames every 10 ms, order-12
/// autocorrelation LPC on the pre-emphasised signal, roots with bandwidth
/// under 400 Hz taken as formants in ascending order.
///
/// Silent frames get amplitude 0 and hold the previous frequency. Tracks
/// missing in a voiced frame also hold their previous frequency.
pub fn formant_tracks(w: &Waveform, n_tracks: usize) -> Result<Vec<FormantTrack>> {
    if !(1..=5).contains(&n_tracks) {
        return Err(domain!("n_tracks must be in [1, 5], got {n_tracks}"));
    }
    let sr = w.sample_rate_hz as f64;
    let frame_len = (0.025 * sr).round() as usize;
    let hop = (0.010 * sr).round() as usize;
    if w.len() < frame_len || frame_len == 0 {
        return Err(domain!("formant tracking needs at least {frame_len} samples, got {}", w.len()));
    }
    let x = w.to_f64();
    let mut emph = Vec::with_capacity(x.len());
    emph.push(x[0]);
    emph.extend(x.windows(2).map(|p| p[1] - PRE_EMPHASIS * p[0]));

    let window = Window::Hann.coefficients(frame_len);
    let n_fft = AMPLITUDE_FFT.max(frame_len.next_power_of_two());
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_fft);
    let bin_hz = sr / n_fft as f64;
    let norm = n_fft as f64 * window.iter().map(|v| v * v).sum::<f64>();

    let n_frames = 1 + (x.len() - frame_len) / hop;
    let mut freqs = vec![Vec::with_capacity(n_frames); n_tracks];
    let mut amps = vec![Vec::with_capacity(n_frames); n_tracks];
    let mut held: Vec<f64> = (0..n_tracks).map(|k| 500.0 * (2 * k + 1) as f64).collect();
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];

    for t in 0..n_frames {
        let start = t * hop;
        let raw = &x[start..start + frame_len];
        let frame_rms = (raw.iter().map(|v| v * v).sum::<f64>() / frame_len as f64).sqrt();
        if frame_rms < SILENCE_RMS {
            for k in 0..n_tracks {
                freqs[k].push(held[k]);
                amps[k].push(0.0);
            }
            continue;
        }
        let found = frame_formants(&emph[start..start + frame_len], &window, sr);
        for (k, h) in held.iter_mut().enumerate() {
            if let Some(&f) = found.get(k) {
                *h = f;
            }
        }
        for (b, (v, wv)) in buf.iter_mut().zip(raw.iter().zip(&window)) {
            *b = Complex::new(v * wv, 0.0);
        }
        for b in buf[frame_len..].iter_mut() {
            *b = Complex::new(0.0, 0.0);
        }
        fft.process(&mut buf);
        let power: Vec<f64> = buf[..n_fft / 2 + 1].iter().map(|c| c.norm_sqr()).collect();
        for k in 0..n_tracks {
            freqs[k].push(held[k]);
            amps[k].push(band_amplitude(&power, held[k], bin_hz, norm));
        }
    }

    Ok(freqs
        .into_iter()
        .zip(amps)
        .map(|(frequency_hz, amplitude)| FormantTrack {
            frequency_hz,
            amplitude,
            hop,
            frame_len,
            sample_rate_hz: w.sample_rate_hz,
        })
        .collect())
}
