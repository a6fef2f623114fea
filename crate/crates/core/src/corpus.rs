//! Deterministic synthetic speech: formant-resonator vowels, a letter-to-formant
//! phone table, and speakers that differ in pitch and vocal-tract length.
//!
//! Used wherever the pipeline needs labelled speech without external data.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audio::{rms_f64, Waveform};

const TARGET_RMS: f64 = 0.1;
const LETTER_MS: f64 = 90.0;
const SPACE_MS: f64 = 70.0;
const RAMP_MS: f64 = 12.0;

/// Source pitch plus formant centre frequencies (Hz).
#[derive(Debug, Clone, PartialEq)]
pub struct VowelSpec {
    pub f0_hz: f64,
    pub formants_hz: Vec<f64>,
    pub bandwidths_hz: Vec<f64>,
}

impl VowelSpec {
    pub fn new(f0_hz: f64, formants_hz: impl Into<Vec<f64>>) -> Self {
        let formants_hz: Vec<f64> = formants_hz.into();
        let bandwidths_hz = formants_hz.iter().map(|f| 50.0 + 0.04 * f).collect();
        Self {
            f0_hz,
            formants_hz,
            bandwidths_hz,
        }
    }
}

/// Two-pole resonator with unit DC gain.
struct Resonator {
    a: f64,
    b: f64,
    c: f64,
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn new(freq: f64, bw: f64, sr: f64) -> Self {
        let t = 1.0 / sr;
        let c = -(-2.0 * PI * bw * t).exp();
        let b = 2.0 * (-PI * bw * t).exp() * (2.0 * PI * freq * t).cos();
        Self {
            a: 1.0 - b - c,
            b,
            c,
            y1: 0.0,
            y2: 0.0,
        }
    }

    fn tick(&mut self, x: f64) -> f64 {
        let y = self.a * x + self.b * self.y1 + self.c * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

/// Glottal-like source: an impulse train with a gentle spectral tilt.
fn glottal_source(f0: &[f64], sr: f64) -> Vec<f64> {
    let mut phase = 0.0;
    let mut tilt = 0.0;
    f0.iter()
        .map(|&f| {
            phase += f / sr;
            let pulse = if phase >= 1.0 {
                phase -= 1.0;
                1.0
            } else {
                0.0
            };
            tilt = pulse + 0.7 * tilt;
            tilt
        })
        .collect()
}

fn resonate(source: &[f64], formants: &[f64], bandwidths: &[f64], sr: f64) -> Vec<f64> {
    let mut bank: Vec<Resonator> = formants
        .iter()
        .zip(bandwidths)
        .map(|(&f, &b)| Resonator::new(f, b, sr))
        .collect();
    source
        .iter()
        .map(|&x| bank.iter_mut().fold(x, |acc, r| r.tick(acc)))
        .collect()
}

fn normalize(mut x: Vec<f64>, target: f64) -> Vec<f64> {
    let r = rms_f64(&x);
    if r > 0.0 {
        x.iter_mut().for_each(|v| *v *= target / r);
    }
    x
}

/// A steady vowel: impulse-train source through cascaded formant resonators,
/// scaled to RMS 0.1.
pub fn synth_vowel(spec: &VowelSpec, duration_secs: f64, sample_rate_hz: u32) -> Waveform {
    let sr = sample_rate_hz as f64;
    let n = (duration_secs * sr).round() as usize;
    let src = glottal_source(&vec![spec.f0_hz; n], sr);
    let y = resonate(&src, &spec.formants_hz, &spec.bandwidths_hz, sr);
    Waveform::from_f64(&normalize(y, TARGET_RMS), sample_rate_hz)
}

/// Voice parameters of one synthetic talker.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpeaker {
    pub id: String,
    pub f0_hz: f64,
    /// Multiplies every formant frequency (shorter tract, higher formants).
    pub tract_scale: f64,
    /// Relative level of aspiration noise mixed into voiced segments.
    pub breathiness: f64,
}

impl SyntheticSpeaker {
    /// Speaker `index` out of `count`, with pitch and tract length spread
    /// evenly and jittered by `rng`.
    pub fn generate(index: usize, count: usize, rng: &mut impl Rng) -> Self {
        let u = if count > 1 { index as f64 / (count - 1) as f64 } else { 0.5 };
        // Interleave so neighbouring ids differ in both pitch and tract.
        let v = ((index * 7) % count.max(1)) as f64 / count.max(1) as f64;
        Self {
            id: format!("spk{index:03}"),
            f0_hz: 95.0 + 140.0 * u + rng.gen_range(-4.0..4.0),
            tract_scale: 0.9 + 0.2 * v + rng.gen_range(-0.01..0.01),
            breathiness: rng.gen_range(0.0..0.08),
        }
    }
}

/// Formant targets for letter `c` (a-z) before speaker scaling.
pub fn letter_formants(c: char) -> [f64; 4] {
    let i = (c as u8 - b'a') as usize;
    // Spread 26 letters over a 2-D (F1, F2) grid with a per-letter F3.
    let f1 = 280.0 + 110.0 * (i % 6) as f64;
    let f2 = 900.0 + 320.0 * (i / 6) as f64 + 25.0 * (i % 6) as f64;
    let f3 = 2300.0 + 180.0 * ((i * 3) % 5) as f64;
    [f1, f2.max(f1 + 300.0), f3, 3600.0]
}

/// Synthesize `text` (lowercase letters and spaces) spoken by `speaker`.
///
/// Letters are 90 ms voiced segments with raised-cosine ramps, spaces are
/// 70 ms of silence.
pub fn synth_utterance(text: &str, speaker: &SyntheticSpeaker, sample_rate_hz: u32, seed: u64) -> Waveform {
    let sr = sample_rate_hz as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seg_len = (LETTER_MS / 1000.0 * sr) as usize;
    let space_len = (SPACE_MS / 1000.0 * sr) as usize;
    let ramp = (RAMP_MS / 1000.0 * sr) as usize;
    let lead = space_len / 2;
    let mut out = vec![0.0; lead];
    let n_chars = text.chars().count().max(1) as f64;
    let mut word = 0usize;
    for (pos, c) in text.chars().enumerate() {
        if c == ' ' {
            word += 1;
        }
        if !c.is_ascii_lowercase() {
            out.extend(std::iter::repeat_n(0.0, space_len));
            continue;
        }
        let formants: Vec<f64> = letter_formants(c).iter().map(|f| f * speaker.tract_scale).collect();
        let bws: Vec<f64> = formants.iter().map(|f| 50.0 + 0.04 * f).collect();
        // Declination over the utterance plus an alternating word accent.
        let progress = pos as f64 / n_chars;
        let accent = if word.is_multiple_of(2) { 0.08 } else { -0.04 };
        let f0: Vec<f64> = (0..seg_len)
            .map(|n| {
                let glide = 0.06 * (PI * n as f64 / seg_len as f64).sin();
                speaker.f0_hz * (1.12 - 0.24 * progress + accent + glide)
            })
            .collect();
        let mut src = glottal_source(&f0, sr);
        for v in src.iter_mut() {
            *v += speaker.breathiness * rng.gen_range(-1.0..1.0);
        }
        let seg = normalize(resonate(&src, &formants, &bws, sr), 1.0);
        for (n, v) in seg.into_iter().enumerate() {
            let edge = n.min(seg_len - 1 - n);
            let g = if edge < ramp {
                0.5 - 0.5 * (PI * edge as f64 / ramp as f64).cos()
            } else {
                1.0
            };
            out.push(v * g);
        }
    }
    out.extend(std::iter::repeat_n(0.0, lead));
    Waveform::from_f64(&normalize(out, TARGET_RMS), sample_rate_hz)
}

const WORDS: &[&str] = &[
    "the", "cat", "sat", "on", "a", "mat", "dog", "ran", "big", "red", "sun", "hot", "blue", "sky", "we", "go",
    "see", "it", "up", "box", "fox", "hen", "pig", "cup", "jam", "kid", "log", "van", "wax", "yes", "zip", "quiz",
];

/// A labelled synthetic utterance.
#[derive(Debug, Clone)]
pub struct SyntheticUtterance {
    pub id: String,
    pub speaker_id: String,
    pub transcript: String,
    pub waveform: Waveform,
}

/// `n_utterances` utterances of 2-3 words spread round-robin over
/// `n_speakers` talkers.
pub fn synth_corpus(n_utterances: usize, n_speakers: usize, seed: u64) -> Vec<SyntheticUtterance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_speakers = n_speakers.max(1);
    let speakers: Vec<SyntheticSpeaker> = (0..n_speakers)
        .map(|i| SyntheticSpeaker::generate(i, n_speakers, &mut rng))
        .collect();
    (0..n_utterances)
        .map(|i| {
            let speaker = &speakers[i % n_speakers];
            let n_words = rng.gen_range(2..=3);
            let words: Vec<&str> = (0..n_words).map(|_| *WORDS.choose(&mut rng).unwrap()).collect();
            let transcript = words.join(" ");
            let waveform = synth_utterance(&transcript, speaker, 16_000, seed.wrapping_mul(31).wrapping_add(i as u64));
            SyntheticUtterance {
                id: format!("utt{i:04}"),
                speaker_id: speaker.id.clone(),
                transcript,
                waveform,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vowel_is_normalized_and_deterministic() {
        let spec = VowelSpec::new(110.0, [700.0, 1220.0, 2600.0]);
        let a = synth_vowel(&spec, 0.3, 16_000);
        let b = synth_vowel(&spec, 0.3, 16_000);
        assert_eq!(a, b);
        assert_eq!(a.len(), 4800);
        assert!((rms_f64(&a.to_f64()) - 0.1).abs() < 1e-6);
    }

    #[test]
    fn letters_have_distinct_formants() {
        let table: Vec<[f64; 4]> = ('a'..='z').map(letter_formants).collect();
        for i in 0..26 {
            for j in i + 1..26 {
                let d = (table[i][0] - table[j][0]).abs() + (table[i][1] - table[j][1]).abs() + (table[i][2] - table[j][2]).abs();
                assert!(d >= 100.0, "letters {i} and {j} too close");
            }
        }
    }

    #[test]
    fn corpus_is_reproducible() {
        let a = synth_corpus(5, 3, 11);
        let b = synth_corpus(5, 3, 11);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.transcript, y.transcript);
            assert_eq!(x.waveform, y.waveform);
        }
        assert_eq!(a[3].speaker_id, a[0].speaker_id);
        assert_ne!(a[1].speaker_id, a[0].speaker_id);
    }

    #[test]
    fn utterance_length_tracks_text() {
        let spk = SyntheticSpeaker {
            id: "s".into(),
            f0_hz: 120.0,
            tract_scale: 1.0,
            breathiness: 0.0,
        };
        let w = synth_utterance("ab c", &spk, 16_000, 0);
        assert_eq!(w.len(), 3 * 1440 + 1120 + 1120);
    }
}
