use rand::seq::{IteratorRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::table::{Condition, ResultRow, ResultTable, AUGMENT_EXPERIMENT, BABBLE_EXPERIMENT};
use crate::audio::Waveform;
use crate::augment::{make_babble, mix_at_snr, noise_vocode, sine_wave_speech, SnrSpec, VocodeSpec, BABBLE_TALKERS, PAPER_CHANNEL_COUNTS};
use crate::corpus::SyntheticUtterance;
use crate::error::{Error, Result};
use crate::losses::{argmax, cer, ctc_greedy_decode};
use crate::model::JointModel;
use crate::training::{normalize_text, record_waveform, waveform_features, Manifest};

/// An utterance available for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalItem {
    pub id: String,
    /// Normalised reference text.
    pub transcript: String,
    pub speaker_id: String,
    pub waveform: Waveform,
}

/// Audio records of a manifest; records whose text normalises to nothing
/// are skipped.
pub fn eval_items_from_manifest(m: &Manifest) -> Result<Vec<EvalItem>> {
    let mut items = Vec::new();
    for (i, rec) in m.records.iter().enumerate() {
        let id = rec.id_or(i);
        let transcript = match normalize_text(&rec.transcript) {
            Ok(t) => t,
            Err(e) => {
                log::warn!("skipping {id}: {e}");
                continue;
            }
        };
        let waveform = record_waveform(rec).map_err(|e| Error::Load {
            record: id.clone(),
            message: e.to_string(),
        })?;
        items.push(EvalItem {
            id,
            transcript,
            speaker_id: rec.speaker_id.clone(),
            waveform,
        });
    }
    Ok(items)
}

pub fn eval_items_from_corpus(corpus: &[SyntheticUtterance]) -> Vec<EvalItem> {
    corpus
        .iter()
        .map(|u| EvalItem {
            id: u.id.clone(),
            transcript: u.transcript.clone(),
            speaker_id: u.speaker_id.clone(),
            waveform: u.waveform.clone(),
        })
        .collect()
}

/// A model plus the speaker labels of its speaker head.
#[derive(Debug, Clone, Copy)]
pub struct Scorer<'a> {
    pub model: &'a JointModel<f32>,
    pub speakers: &'a [String],
}

/// CER of one decoded waveform and, when the model has a speaker head and
/// knows the speaker, whether the speaker was identified.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ItemScore {
    pub cer: f64,
    pub speaker_correct: Option<bool>,
}

impl Scorer<'_> {
    pub fn score(&self, item: &EvalItem, audio: &Waveform) -> Result<ItemScore> {
        let joint = self.model.config.use_speaker_branch;
        let out = self.model.infer(&waveform_features(audio, joint)?)?;
        let hyp = ctc_greedy_decode(&out.speech_logits);
        let target = self.speakers.iter().position(|s| *s == item.speaker_id);
        let speaker_correct = match (out.speaker_logits, target) {
            (Some(logits), Some(t)) => Some(argmax(&logits) == t),
            _ => None,
        };
        Ok(ItemScore {
            cer: cer(&item.transcript, &hyp)?,
            speaker_correct,
        })
    }
}

fn summarize(experiment: &str, condition: Condition, scores: &[ItemScore], joint: bool) -> ResultRow {
    let n = scores.len() as f64;
    let mean = scores.iter().map(|s| s.cer).sum::<f64>() / n;
    let std = (scores.iter().map(|s| (s.cer - mean).powi(2)).sum::<f64>() / n).sqrt();
    let judged: Vec<bool> = scores.iter().filter_map(|s| s.speaker_correct).collect();
    let sra_mean = (joint && !judged.is_empty()).then(|| judged.iter().filter(|&&c| c).count() as f64 / judged.len() as f64);
    ResultRow {
        experiment: experiment.into(),
        condition,
        n_items: scores.len(),
        cer_mean: mean,
        cer_std: std,
        sra_mean,
    }
}

/// One foreground utterance with the eight talkers of its babble.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pair {
    pub foreground: usize,
    pub background: [usize; BABBLE_TALKERS],
}

/// Foreground/babble pairings, fixed across every SNR.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSet {
    pub pairs: Vec<Pair>,
    pub seed: u64,
}

impl PairSet {
    /// Foregrounds cycle through a seeded permutation of the items; each
    /// background is eight distinct other items.
    pub fn build(n_items: usize, n_pairs: usize, seed: u64) -> Result<Self> {
        if n_items < BABBLE_TALKERS + 1 {
            return Err(Error::Config(format!(
                "babble needs at least {} distinct utterances, got {n_items}",
                BABBLE_TALKERS + 1
            )));
        }
        if n_pairs == 0 {
            return Err(Error::Config("at least one pair is needed".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..n_items).collect();
        order.shuffle(&mut rng);
        let pairs = (0..n_pairs)
            .map(|k| {
                let foreground = order[k % n_items];
                let others = (0..n_items).filter(|&i| i != foreground).choose_multiple(&mut rng, BABBLE_TALKERS);
                let mut background = [0; BABBLE_TALKERS];
                background.copy_from_slice(&others);
                background.shuffle(&mut rng);
                Pair { foreground, background }
            })
            .collect();
        Ok(Self { pairs, seed })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BabbleOptions {
    pub n_pairs: usize,
    pub snrs: Vec<SnrSpec>,
    pub seed: u64,
}

impl Default for BabbleOptions {
    fn default() -> Self {
        Self {
            n_pairs: 1000,
            snrs: SnrSpec::babble_grid(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BabbleRun {
    /// One row per SNR, ascending with clean last.
    pub table: ResultTable,
    pub pairs: PairSet,
    /// The pairs actually evaluated at each SNR, in table order.
    pub evaluated: Vec<Vec<Pair>>,
}

/// Multi-talker babble sweep: each pair's babble is mixed with its
/// foreground at every SNR, decoded and scored.
pub fn run_babble(scorer: Scorer<'_>, items: &[EvalItem], opts: &BabbleOptions) -> Result<BabbleRun> {
    if opts.snrs.is_empty() {
        return Err(Error::Config("no SNR conditions requested".into()));
    }
    let pairs = PairSet::build(items.len(), opts.n_pairs, opts.seed)?;
    let mut snrs = opts.snrs.clone();
    snrs.sort_by(|a, b| a.sort_key().total_cmp(&b.sort_key()));
    let mut scores: Vec<Vec<ItemScore>> = vec![Vec::with_capacity(pairs.pairs.len()); snrs.len()];
    let mut evaluated: Vec<Vec<Pair>> = vec![Vec::new(); snrs.len()];
    for pair in &pairs.pairs {
        let fg = &items[pair.foreground];
        let talkers: Vec<Waveform> = pair.background.iter().map(|&i| items[i].waveform.clone()).collect();
        let babble = make_babble(&talkers)?;
        for (k, &snr) in snrs.iter().enumerate() {
            let mixed = mix_at_snr(&fg.waveform, &babble, snr)?.mixed;
            scores[k].push(scorer.score(fg, &mixed)?);
            evaluated[k].push(pair.clone());
        }
    }
    let joint = scorer.model.config.use_speaker_branch;
    let mut table = ResultTable::default();
    for (snr, s) in snrs.iter().zip(&scores) {
        table.push(summarize(BABBLE_EXPERIMENT, Condition::Snr(*snr), s, joint))?;
    }
    Ok(BabbleRun { table, pairs, evaluated })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentOptions {
    pub vocode_n: usize,
    pub sine_n: usize,
    pub channels: Vec<usize>,
    pub seed: u64,
}

impl Default for AugmentOptions {
    fn default() -> Self {
        Self {
            vocode_n: 1000,
            sine_n: 795,
            channels: PAPER_CHANNEL_COUNTS.to_vec(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentRun {
    pub table: ResultTable,
    pub vocoded_ids: Vec<String>,
    pub sinewave_ids: Vec<String>,
}

/// `n` item positions: a seeded sample without replacement, or with
/// replacement when more are requested than exist.
fn sample(n_items: usize, n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if n <= n_items {
        (0..n_items).choose_multiple(rng, n)
    } else {
        (0..n).map(|_| rng.gen_range(0..n_items)).collect()
    }
}

/// Noise-vocoded conditions (one row per channel count) and a sine-wave
/// speech condition.
pub fn run_augment(scorer: Scorer<'_>, items: &[EvalItem], opts: &AugmentOptions) -> Result<AugmentRun> {
    if items.is_empty() {
        return Err(Error::Config("no utterances to augment".into()));
    }
    if opts.vocode_n == 0 || opts.sine_n == 0 {
        return Err(Error::Config("each augmentation condition needs at least one excerpt".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let vocoded = sample(items.len(), opts.vocode_n, &mut rng);
    let sines = sample(items.len(), opts.sine_n, &mut rng);
    let vocoded_ids: Vec<String> = vocoded.iter().map(|&i| items[i].id.clone()).collect();
    let sinewave_ids: Vec<String> = sines.iter().map(|&i| items[i].id.clone()).collect();
    log::info!("vocoded excerpts: {}", vocoded_ids.join(","));
    log::info!("sine-wave excerpts: {}", sinewave_ids.join(","));

    let joint = scorer.model.config.use_speaker_branch;
    let mut channels = opts.channels.clone();
    channels.sort_unstable();
    let mut table = ResultTable::default();
    for &ch in &channels {
        let spec = VocodeSpec::new(ch);
        let scores = vocoded
            .iter()
            .enumerate()
            .map(|(k, &i)| {
                let carrier_seed = opts.seed ^ ((k as u64) << 20) ^ ch as u64;
                scorer.score(&items[i], &noise_vocode(&items[i].waveform, &spec, carrier_seed)?)
            })
            .collect::<Result<Vec<_>>>()?;
        table.push(summarize(AUGMENT_EXPERIMENT, Condition::Channels(ch), &scores, joint))?;
    }
    let scores = sines
        .iter()
        .map(|&i| scorer.score(&items[i], &sine_wave_speech(&items[i].waveform)?))
        .collect::<Result<Vec<_>>>()?;
    table.push(summarize(AUGMENT_EXPERIMENT, Condition::SineWave, &scores, joint))?;
    Ok(AugmentRun {
        table,
        vocoded_ids,
        sinewave_ids,
    })
}
