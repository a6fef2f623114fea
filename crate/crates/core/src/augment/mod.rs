//! Adversarial input conditions: babble at an exact SNR, 8-talker babble
//! construction, noise-vocoded speech and sine-wave speech.
//!
//! Every augmentation preserves the length of the input signal.

mod babble;
mod sinewave;
mod snr;
mod vocoder;

pub use babble::{make_babble, BABBLE_TALKERS, BABBLE_TALKER_RMS};
pub use sinewave::{sine_wave_speech, SINE_TRACKS};
pub use snr::{mix_at_snr, Mixture, SnrSpec};
pub use vocoder::{noise_vocode, VocodeSpec, PAPER_CHANNEL_COUNTS};

use crate::audio::Waveform;
use crate::error::{domain, Result};

pub(crate) fn require_min_duration(w: &Waveform, ms: f64, what: &str) -> Result<()> {
    let needed = (ms / 1000.0 * w.sample_rate_hz as f64).ceil() as usize;
    if w.len() < needed {
        return Err(domain!("{what} needs at least {ms} ms ({needed} samples), got {}", w.len()));
    }
    Ok(())
}
