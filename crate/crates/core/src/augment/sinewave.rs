use std::f64::consts::PI;

use super::require_min_duration;
use crate::audio::{formant_tracks, rms_f64, FormantTrack, Waveform};
use crate::error::Result;

pub const SINE_TRACKS: usize = 4;

/// Value of a per-frame series at sample `n`, linearly interpolated between
/// frame centres and held beyond the first and last centre.
fn interpolate(track: &FormantTrack, values: &[f64], n: usize) -> f64 {
    let pos = (n as f64 - track.frame_len as f64 / 2.0) / track.hop as f64;
    if pos <= 0.0 {
        return values[0];
    }
    let last = values.len() - 1;
    if pos >= last as f64 {
        return values[last];
    }
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    values[i] * (1.0 - frac) + values[i + 1] * frac
}

/// Render tracks as a sum of sinusoids whose phase integrates the
/// interpolated instantaneous frequency.
pub(crate) fn synthesize_tracks(tracks: &[FormantTrack], len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    for track in tracks {
        let sr = track.sample_rate_hz as f64;
        let mut phase = 0.0f64;
        for (n, o) in out.iter_mut().enumerate() {
            let f = interpolate(track, &track.frequency_hz, n);
            let a = interpolate(track, &track.amplitude, n);
            phase += 2.0 * PI * f / sr;
            if phase > 2.0 * PI {
                phase -= 2.0 * PI;
            }
            *o += a * phase.sin();
        }
    }
    out
}

/// Sine-wave speech: four LPC formant tracks replaced by phase-continuous
/// sinusoids, output RMS matched to the input.
pub fn sine_wave_speech(w: &Waveform) -> Result<Waveform> {
    require_min_duration(w, 50.0, "sine-wave speech")?;
    let tracks = formant_tracks(w, SINE_TRACKS)?;
    let mut out = synthesize_tracks(&tracks, w.len());
    let out_rms = rms_f64(&out);
    if out_rms > 0.0 {
        let target = rms_f64(&w.to_f64());
        out.iter_mut().for_each(|v| *v *= target / out_rms);
    }
    Ok(Waveform::from_f64(&out, w.sample_rate_hz))
}
