use crate::audio::{loop_to_len, rms_f64, Waveform};
use crate::error::{domain, Result};

pub const BABBLE_TALKERS: usize = 8;
/// RMS each talker is normalised to, and the RMS of the finished babble.
pub const BABBLE_TALKER_RMS: f64 = 0.1;

/// Sum eight talkers into babble. Each talker is RMS-normalised and looped
/// to the longest length; the sum is renormalised to the same RMS.
pub fn make_babble(utterances: &[Waveform]) -> Result<Waveform> {
    if utterances.len() != BABBLE_TALKERS {
        return Err(domain!("babble needs exactly {BABBLE_TALKERS} talkers, got {}", utterances.len()));
    }
    let sr = utterances[0].sample_rate_hz;
    if utterances.iter().any(|u| u.sample_rate_hz != sr) {
        return Err(domain!("babble talkers have mixed sample rates"));
    }
    let len = utterances.iter().map(Waveform::len).max().unwrap_or(0);
    let mut sum = vec![0.0f64; len];
    for (i, u) in utterances.iter().enumerate() {
        let x = u.to_f64();
        let r = rms_f64(&x);
        if r == 0.0 {
            return Err(domain!("babble talker {i} is silent"));
        }
        for (acc, v) in sum.iter_mut().zip(loop_to_len(&x, len)) {
            *acc += v * BABBLE_TALKER_RMS / r;
        }
    }
    let r = rms_f64(&sum);
    if r > 0.0 {
        sum.iter_mut().for_each(|v| *v *= BABBLE_TALKER_RMS / r);
    }
    Ok(Waveform::from_f64(&sum, sr))
}
