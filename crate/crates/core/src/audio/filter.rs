use std::f64::consts::PI;

use rustfft::num_complex::Complex;

use super::Waveform;
use crate::error::{domain, Result};

pub const DEFAULT_ENVELOPE_CUTOFF_HZ: f64 = 30.0;
const BUTTERWORTH_ORDER: usize = 4;

/// A pass band in Hz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandSpec {
    pub low_hz: f64,
    pub high_hz: f64,
}

impl BandSpec {
    pub fn new(low_hz: f64, high_hz: f64) -> Self {
        Self { low_hz, high_hz }
    }

    pub fn validate(&self, sample_rate_hz: u32) -> Result<()> {
        let nyq = sample_rate_hz as f64 / 2.0;
        if !(self.low_hz > 0.0 && self.low_hz < self.high_hz && self.high_hz < nyq) {
            return Err(domain!(
                "band [{}, {}] Hz must satisfy 0 < low < high < {nyq}",
                self.low_hz,
                self.high_hz
            ));
        }
        Ok(())
    }

    pub fn center_hz(&self) -> f64 {
        (self.low_hz * self.high_hz).sqrt()
    }
}

/// Second-order section, `a[0]` is always 1.
#[derive(Debug, Clone, Copy)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    fn response(&self, z: Complex<f64>) -> Complex<f64> {
        let zi = z.inv();
        let zi2 = zi * zi;
        (self.b[0] + zi * self.b[1] + zi2 * self.b[2]) / (self.a[0] + zi * self.a[1] + zi2 * self.a[2])
    }

    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (self.a[0] + self.a[1] + self.a[2])
    }
}

/// Cascade of biquads with a zero-phase (forward-backward) driver.
#[derive(Debug, Clone)]
pub struct SosFilter {
    pub sections: Vec<Biquad>,
    // Samples of odd-reflected padding used by `filtfilt`.
    pad: usize,
}

fn prototype_poles(order: usize) -> Vec<Complex<f64>> {
    (1..=order)
        .map(|k| Complex::from_polar(1.0, PI * (2 * k + order - 1) as f64 / (2 * order) as f64))
        .collect()
}

fn bilinear(s: Complex<f64>, fs: f64) -> Complex<f64> {
    (2.0 * fs + s) / (2.0 * fs - s)
}

fn prewarp(hz: f64, fs: f64) -> f64 {
    2.0 * fs * (PI * hz / fs).tan()
}

/// Pair conjugate digital poles into denominators. Real poles are paired
/// with each other.
fn pole_sections(poles: &[Complex<f64>]) -> Vec<[f64; 3]> {
    let mut complex: Vec<Complex<f64>> = poles.iter().copied().filter(|p| p.im > 1e-12).collect();
    complex.sort_by(|a, b| a.arg().total_cmp(&b.arg()));
    let mut real: Vec<f64> = poles.iter().filter(|p| p.im.abs() <= 1e-12).map(|p| p.re).collect();
    real.sort_by(f64::total_cmp);
    let mut dens: Vec<[f64; 3]> = complex.iter().map(|p| [1.0, -2.0 * p.re, p.norm_sqr()]).collect();
    for pair in real.chunks(2) {
        match pair {
            [r1, r2] => dens.push([1.0, -(r1 + r2), r1 * r2]),
            [r] => dens.push([1.0, -r, 0.0]),
            _ => unreachable!(),
        }
    }
    dens
}

impl SosFilter {
    /// Order-4 Butterworth band-pass (4 sections), unit gain at the band's
    /// geometric centre.
    pub fn butterworth_bandpass(band: BandSpec, sample_rate_hz: u32) -> Result<Self> {
        band.validate(sample_rate_hz)?;
        let fs = sample_rate_hz as f64;
        let w1 = prewarp(band.low_hz, fs);
        let w2 = prewarp(band.high_hz, fs);
        let bw = w2 - w1;
        let w0sq = w1 * w2;
        let mut poles = Vec::with_capacity(2 * BUTTERWORTH_ORDER);
        for p in prototype_poles(BUTTERWORTH_ORDER) {
            let pb = p * bw;
            let disc = (pb * pb - 4.0 * w0sq).sqrt();
            poles.push(bilinear((pb + disc) / 2.0, fs));
            poles.push(bilinear((pb - disc) / 2.0, fs));
        }
        let mut sections: Vec<Biquad> = pole_sections(&poles)
            .into_iter()
            .map(|a| Biquad { b: [1.0, 0.0, -1.0], a })
            .collect();
        let center = 2.0 * (w0sq.sqrt() / (2.0 * fs)).atan();
        let z = Complex::from_polar(1.0, center);
        let gain: f64 = sections.iter().map(|s| s.response(z)).product::<Complex<f64>>().norm();
        for c in sections[0].b.iter_mut() {
            *c /= gain;
        }
        let pad = ((3.0 * fs / band.low_hz.min(band.high_hz - band.low_hz)) as usize).clamp(32, 16_384);
        Ok(Self { sections, pad })
    }

    /// Order-4 Butterworth low-pass with unit DC gain.
    pub fn butterworth_lowpass(cutoff_hz: f64, sample_rate_hz: u32) -> Result<Self> {
        let fs = sample_rate_hz as f64;
        if !(cutoff_hz > 0.0 && cutoff_hz < fs / 2.0) {
            return Err(domain!("low-pass cutoff {cutoff_hz} Hz outside (0, {})", fs / 2.0));
        }
        let wc = prewarp(cutoff_hz, fs);
        let poles: Vec<Complex<f64>> = prototype_poles(BUTTERWORTH_ORDER)
            .into_iter()
            .map(|p| bilinear(p * wc, fs))
            .collect();
        let mut sections: Vec<Biquad> = pole_sections(&poles)
            .into_iter()
            .map(|a| Biquad { b: [1.0, 2.0, 1.0], a })
            .collect();
        for s in sections.iter_mut() {
            let g = s.dc_gain();
            for c in s.b.iter_mut() {
                *c /= g;
            }
        }
        let pad = ((3.0 * fs / cutoff_hz) as usize).clamp(32, 16_384);
        Ok(Self { sections, pad })
    }

    /// Complex frequency response at `hz`.
    pub fn response(&self, hz: f64, sample_rate_hz: u32) -> Complex<f64> {
        let z = Complex::from_polar(1.0, 2.0 * PI * hz / sample_rate_hz as f64);
        self.sections.iter().map(|s| s.response(z)).product()
    }

    /// Causal pass. State starts at the steady state for a constant input
    /// equal to `x[0]`.
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        let Some(&first) = x.first() else {
            return y;
        };
        let mut u = first;
        for s in &self.sections {
            let out = s.dc_gain() * u;
            let z2 = s.b[2] * u - s.a[2] * out;
            let mut st = [s.b[1] * u - s.a[1] * out + z2, z2];
            for v in y.iter_mut() {
                let xin = *v;
                let o = s.b[0] * xin + st[0];
                st[0] = s.b[1] * xin - s.a[1] * o + st[1];
                st[1] = s.b[2] * xin - s.a[2] * o;
                *v = o;
            }
            u = out;
        }
        y
    }

    /// Zero-phase forward-backward filtering with odd-reflection padding.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        if n < 2 {
            return self.filter(x);
        }
        let pad = self.pad.min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));
        let mut y = self.filter(&ext);
        y.reverse();
        let mut y = self.filter(&y);
        y.reverse();
        y[pad..pad + n].to_vec()
    }
}

pub(crate) fn bandpass_f64(x: &[f64], band: BandSpec, sample_rate_hz: u32) -> Result<Vec<f64>> {
    Ok(SosFilter::butterworth_bandpass(band, sample_rate_hz)?.filtfilt(x))
}

pub(crate) fn envelope_f64(x: &[f64], cutoff_hz: f64, sample_rate_hz: u32) -> Result<Vec<f64>> {
    let lp = SosFilter::butterworth_lowpass(cutoff_hz, sample_rate_hz)?;
    let rectified: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    Ok(lp.filtfilt(&rectified).into_iter().map(|v| v.max(0.0)).collect())
}

/// One zero-phase band-passed copy of `w` per band.
pub fn bandpass_bank(w: &Waveform, bands: &[BandSpec]) -> Result<Vec<Waveform>> {
    for b in bands {
        b.validate(w.sample_rate_hz)?;
    }
    let x = w.to_f64();
    bands
        .iter()
        .map(|&b| Ok(Waveform::from_f64(&bandpass_f64(&x, b, w.sample_rate_hz)?, w.sample_rate_hz)))
        .collect()
}

/// Amplitude envelope: rectification followed by a zero-phase low-pass at
/// `cutoff_hz`, clamped at zero.
///
/// Rectification is full-wave so the envelope does not depend on the sign
/// of the input.
pub fn envelope(w: &Waveform, cutoff_hz: f64) -> Result<Waveform> {
    let env = envelope_f64(&w.to_f64(), cutoff_hz, w.sample_rate_hz)?;
    Ok(Waveform::from_f64(&env, w.sample_rate_hz))
}
