use std::f64::consts::PI;

use super::Waveform;
use crate::error::{domain, Result};

const TAPS: i64 = 64;
const KAISER_BETA: f64 = 8.0;
// Passband fraction of the lower Nyquist frequency.
const ROLLOFF: f64 = 0.945;

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..64 {
        term *= q / (k as f64 * k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Band-limited resampling with a 64-tap Kaiser-windowed sinc kernel
/// evaluated at each output instant.
pub fn resample(w: &Waveform, target_hz: u32) -> Result<Waveform> {
    if target_hz == 0 {
        return Err(domain!("target sample rate must be positive"));
    }
    if w.sample_rate_hz == target_hz {
        return Ok(w.clone());
    }
    let src = w.sample_rate_hz as f64;
    let dst = target_hz as f64;
    let out_len = (w.len() as f64 * dst / src).round() as usize;
    let step = src / dst;
    let cutoff = ROLLOFF * (dst / src).min(1.0);
    let half = (TAPS / 2) as f64;
    let norm = bessel_i0(KAISER_BETA);
    let x = w.to_f64();
    let n_in = x.len() as i64;

    let out: Vec<f64> = (0..out_len)
        .map(|n| {
            let t = n as f64 * step;
            let base = t.floor() as i64;
            let mut acc = 0.0;
            for k in (base - TAPS / 2 + 1)..=(base + TAPS / 2) {
                if k < 0 || k >= n_in {
                    continue;
                }
                let d = t - k as f64;
                let r = d / half;
                if r.abs() > 1.0 {
                    continue;
                }
                let win = bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / norm;
                acc += x[k as usize] * cutoff * sinc(cutoff * d) * win;
            }
            acc
        })
        .collect();
    Ok(Waveform::from_f64(&out, target_hz))
}
