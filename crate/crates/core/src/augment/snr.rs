use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::audio::{loop_to_len, rms_f64, Waveform};
use crate::error::{domain, Error, Result};

/// Requested signal-to-noise ratio in dB, or clean pass-through.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SnrSpec {
    Db(f64),
    Infinite,
}

impl SnrSpec {
    pub const MIN_DB: f64 = -60.0;
    pub const MAX_DB: f64 = 60.0;

    pub fn db(value: f64) -> Result<Self> {
        if !value.is_finite() || !(Self::MIN_DB..=Self::MAX_DB).contains(&value) {
            return Err(domain!("SNR {value} dB outside [{}, {}]", Self::MIN_DB, Self::MAX_DB));
        }
        Ok(SnrSpec::Db(value))
    }

    /// The evaluation grid: -15 to 20 dB in 5 dB steps, then clean.
    pub fn babble_grid() -> Vec<SnrSpec> {
        (-3..=4)
            .map(|k| SnrSpec::Db(5.0 * k as f64))
            .chain(std::iter::once(SnrSpec::Infinite))
            .collect()
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, SnrSpec::Infinite)
    }

    /// Sort key placing `Infinite` after every finite value.
    pub fn sort_key(&self) -> f64 {
        match self {
            SnrSpec::Db(v) => *v,
            SnrSpec::Infinite => f64::INFINITY,
        }
    }
}

impl fmt::Display for SnrSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SnrSpec::Db(v) => write!(f, "{v}"),
            SnrSpec::Infinite => f.write_str("inf"),
        }
    }
}

impl FromStr for SnrSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "+inf" | "infinity" => Ok(SnrSpec::Infinite),
            other => {
                let v: f64 = other.parse().map_err(|_| domain!("cannot parse SNR {s:?}"))?;
                SnrSpec::db(v)
            }
        }
    }
}

/// Output of [`mix_at_snr`].
#[derive(Debug, Clone)]
pub struct Mixture {
    pub mixed: Waveform,
    /// Gain applied to the (looped) noise before summation.
    pub noise_gain: f64,
    /// Scaled noise exactly as added, before any peak normalisation.
    pub noise_component: Vec<f64>,
    /// Factor applied to the sum to keep |sample| <= 1 (1.0 when untouched).
    pub peak_scale: f64,
}

/// Add `noise` to `signal` at the requested SNR.
///
/// The noise is looped or truncated to the signal length and scaled by
/// `(rms(signal) / rms(noise)) * 10^(-snr/20)`. If the sum exceeds full
/// scale it is rescaled as a whole and the factor is reported in
/// [`Mixture::peak_scale`], so the component SNR stays exact.
pub fn mix_at_snr(signal: &Waveform, noise: &Waveform, snr: SnrSpec) -> Result<Mixture> {
    if signal.sample_rate_hz != noise.sample_rate_hz {
        return Err(domain!(
            "sample rates differ: signal {} Hz, noise {} Hz",
            signal.sample_rate_hz,
            noise.sample_rate_hz
        ));
    }
    let s = signal.to_f64();
    let s_rms = rms_f64(&s);
    if signal.is_empty() || s_rms == 0.0 {
        return Err(domain!("signal is silent"));
    }
    let snr_db = match snr {
        SnrSpec::Infinite => {
            return Ok(Mixture {
                mixed: signal.clone(),
                noise_gain: 0.0,
                noise_component: vec![0.0; s.len()],
                peak_scale: 1.0,
            })
        }
        SnrSpec::Db(v) => SnrSpec::db(v).map(|_| v)?,
    };
    let looped = loop_to_len(&noise.to_f64(), s.len());
    let n_rms = rms_f64(&looped);
    if n_rms == 0.0 {
        return Err(domain!("noise is silent"));
    }
    let gain = (s_rms / n_rms) * 10f64.powf(-snr_db / 20.0);
    let noise_component: Vec<f64> = looped.iter().map(|v| v * gain).collect();
    let sum: Vec<f64> = s.iter().zip(&noise_component).map(|(a, b)| a + b).collect();
    let peak = sum.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let peak_scale = if peak > 1.0 { 1.0 / peak } else { 1.0 };
    let mixed: Vec<f64> = sum.iter().map(|v| v * peak_scale).collect();
    Ok(Mixture {
        mixed: Waveform::from_f64(&mixed, signal.sample_rate_hz),
        noise_gain: gain,
        noise_component,
        peak_scale,
    })
}
