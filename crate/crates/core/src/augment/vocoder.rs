use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::require_min_duration;
use crate::audio::filter::{bandpass_f64, envelope_f64};
use crate::audio::{rms_f64, BandSpec, Waveform, DEFAULT_ENVELOPE_CUTOFF_HZ};
use crate::error::{domain, Result};

/// Channel counts of the noise-vocoding conditions.
pub const PAPER_CHANNEL_COUNTS: [usize; 4] = [1, 4, 16, 64];

/// Noise-vocoder channel layout: `n_channels` log-spaced contiguous bands
/// covering `[band_low_hz, band_high_hz]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VocodeSpec {
    pub n_channels: usize,
    pub band_low_hz: f64,
    pub band_high_hz: f64,
}

impl VocodeSpec {
    pub fn new(n_channels: usize) -> Self {
        Self {
            n_channels,
            band_low_hz: 80.0,
            band_high_hz: 7600.0,
        }
    }

    pub fn bands(&self) -> Result<Vec<BandSpec>> {
        if self.n_channels == 0 {
            return Err(domain!("vocoder needs at least one channel"));
        }
        if !(self.band_low_hz > 0.0 && self.band_low_hz < self.band_high_hz) {
            return Err(domain!("vocoder band edges must be increasing and positive"));
        }
        let ratio = self.band_high_hz / self.band_low_hz;
        let edges: Vec<f64> = (0..=self.n_channels)
            .map(|i| self.band_low_hz * ratio.powf(i as f64 / self.n_channels as f64))
            .collect();
        Ok(edges.windows(2).map(|e| BandSpec::new(e[0], e[1])).collect())
    }
}

/// Noise-vocoded speech.
///
/// Per band, the envelope of the band-passed speech modulates band-passed
/// white Gaussian noise (seeded, unit RMS per band); the bands are summed
/// and the result is scaled back to the input RMS.
pub fn noise_vocode(w: &Waveform, spec: &VocodeSpec, rng_seed: u64) -> Result<Waveform> {
    require_min_duration(w, 50.0, "noise vocoding")?;
    let bands = spec.bands()?;
    for b in &bands {
        b.validate(w.sample_rate_hz)?;
    }
    let x = w.to_f64();
    let sr = w.sample_rate_hz;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let carrier: Vec<f64> = (0..x.len()).map(|_| StandardNormal.sample(&mut rng)).collect();

    let mut out = vec![0.0; x.len()];
    for band in bands {
        let env = envelope_f64(&bandpass_f64(&x, band, sr)?, DEFAULT_ENVELOPE_CUTOFF_HZ, sr)?;
        if env.iter().all(|&e| e == 0.0) {
            continue;
        }
        let noise = bandpass_f64(&carrier, band, sr)?;
        let n_rms = rms_f64(&noise);
        if n_rms == 0.0 {
            continue;
        }
        for ((o, e), n) in out.iter_mut().zip(&env).zip(&noise) {
            *o += e * n / n_rms;
        }
    }
    let out_rms = rms_f64(&out);
    if out_rms > 0.0 {
        let target = rms_f64(&x);
        out.iter_mut().for_each(|v| *v *= target / out_rms);
    }
    Ok(Waveform::from_f64(&out, sr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::synth_corpus;

    fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    fn band_envelope(x: &[f64], band: BandSpec) -> Vec<f64> {
        envelope_f64(&bandpass_f64(x, band, 16_000).unwrap(), 30.0, 16_000).unwrap()
    }

    #[test]
    fn log_spaced_contiguous_bands() {
        let bands = VocodeSpec::new(4).bands().unwrap();
        assert_eq!(bands.len(), 4);
        assert!((bands[0].low_hz - 80.0).abs() < 1e-9);
        assert!((bands[3].high_hz - 7600.0).abs() < 1e-9);
        for pair in bands.windows(2) {
            assert_eq!(pair[0].high_hz, pair[1].low_hz);
            let r0 = pair[0].high_hz / pair[0].low_hz;
            let r1 = pair[1].high_hz / pair[1].low_hz;
            assert!((r0 - r1).abs() < 1e-9);
        }
        assert!(VocodeSpec::new(0).bands().is_err());
    }

    #[test]
    fn silence_stays_silent() {
        let out = noise_vocode(&Waveform::zeros(1600, 16_000), &VocodeSpec::new(4), 1).unwrap();
        assert!(out.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn too_short_rejected() {
        assert!(noise_vocode(&Waveform::zeros(700, 16_000), &VocodeSpec::new(4), 1).is_err());
    }

    #[test]
    fn deterministic_and_length_preserving() {
        let w = &synth_corpus(1, 1, 5)[0].waveform;
        let a = noise_vocode(w, &VocodeSpec::new(16), 42).unwrap();
        let b = noise_vocode(w, &VocodeSpec::new(16), 42).unwrap();
        let c = noise_vocode(w, &VocodeSpec::new(16), 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), w.len());
        assert!((rms_f64(&a.to_f64()) - rms_f64(&w.to_f64())).abs() < 1e-6);
    }

    #[test]
    fn single_channel_keeps_broadband_envelope() {
        let w = &synth_corpus(1, 1, 8)[0].waveform;
        let out = noise_vocode(w, &VocodeSpec::new(1), 3).unwrap();
        let band = BandSpec::new(80.0, 7600.0);
        let r = pearson(&band_envelope(&w.to_f64(), band), &band_envelope(&out.to_f64(), band));
        assert!(r >= 0.9, "r = {r}");
    }

    #[test]
    fn sixty_four_channels_keep_band_envelopes_and_lose_periodicity() {
        let w = &synth_corpus(1, 1, 9)[0].waveform;
        let spec = VocodeSpec::new(64);
        let out = noise_vocode(w, &spec, 4).unwrap();
        let (x, y) = (w.to_f64(), out.to_f64());
        let bands = spec.bands().unwrap();
        let mean_r = bands
            .iter()
            .map(|&b| pearson(&band_envelope(&x, b), &band_envelope(&y, b)))
            .sum::<f64>()
            / bands.len() as f64;
        assert!(mean_r >= 0.8, "mean r = {mean_r}");

        // normalised autocorrelation over pitch lags (2.5 - 20 ms)
        let r0: f64 = y.iter().map(|v| v * v).sum();
        let peak = (40..=320)
            .map(|lag| y[..y.len() - lag].iter().zip(&y[lag..]).map(|(a, b)| a * b).sum::<f64>() / r0)
            .fold(f64::MIN, f64::max);
        assert!(peak < 0.5, "autocorrelation peak {peak}");
    }

    /// Mean short-time voicing strength: best normalised autocorrelation over
    /// 2.5-20 ms lags in 40 ms frames, over frames within 13 dB of the loudest.
    fn voicing_strength(y: &[f64]) -> f64 {
        let (frame, hop) = (640, 320);
        let energy = |f: &[f64]| f.iter().map(|v| v * v).sum::<f64>();
        let loudest = y.windows(frame).step_by(hop).map(energy).fold(0.0, f64::max);
        let mut scores = Vec::new();
        let mut start = 0;
        while start + frame + 320 <= y.len() {
            let f = &y[start..start + frame + 320];
            let e0 = energy(&f[..frame]);
            if e0 > 0.05 * loudest {
                let best = (40..=320)
                    .map(|lag| {
                        let num: f64 = (0..frame).map(|i| f[i] * f[i + lag]).sum();
                        num / (e0 * energy(&f[lag..lag + frame])).sqrt()
                    })
                    .fold(f64::MIN, f64::max);
                scores.push(best);
            }
            start += hop;
        }
        scores.iter().sum::<f64>() / scores.len() as f64
    }

    #[test]
    fn few_channels_remove_voicing() {
        let w = &synth_corpus(1, 1, 9)[0].waveform;
        assert!(voicing_strength(&w.to_f64()) > 0.8);
        for ch in [1, 4] {
            let out = noise_vocode(w, &VocodeSpec::new(ch), 4).unwrap();
            let v = voicing_strength(&out.to_f64());
            assert!(v < 0.5, "{ch} channels: voicing {v}");
        }
    }
}
