use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dataset::{make_batches, Dataset};
use super::optim::{adam_step, AdamConfig, AdamState, StepOutcome};
use crate::embeddings::Matrix;
use crate::error::{Error, Result};
use crate::losses::{argmax, corpus_cer, cross_entropy, ctc_greedy_decode, ctc_loss, joint_loss, speaker_accuracy, Averaging, CharVocab};
use crate::model::{Checkpoint, ForwardOptions, JointModel, ModelConfig, Tape};

/// Stop once the training split reaches both thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarlyStop {
    pub max_cer: f64,
    pub min_sra: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Fraction of items held out for model selection.
    pub heldout_fraction: f64,
    pub max_steps: Option<u64>,
    /// Evaluate every this many epochs (and after the last).
    pub eval_every: usize,
    pub early_stop: Option<EarlyStop>,
    pub optimizer: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 8,
            seed: 0,
            heldout_fraction: 0.1,
            max_steps: None,
            eval_every: 1,
            early_stop: None,
            optimizer: AdamConfig::default(),
        }
    }
}

/// Metrics after one evaluated epoch. Losses are means over the epoch's
/// steps.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub step: u64,
    pub joint_loss: f64,
    pub ctc_loss: f64,
    pub ce_loss: Option<f64>,
    pub heldout_cer: Option<f64>,
    pub heldout_sra: Option<f64>,
    pub train_cer: f64,
    pub train_sra: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Parameters with the best selection CER (held-out, or training when
    /// nothing is held out).
    pub checkpoint: Checkpoint,
    pub log: Vec<EpochLog>,
    /// Joint loss of every applied step.
    pub step_losses: Vec<f64>,
    pub steps: u64,
    pub skipped_steps: u64,
    pub heldout: Vec<usize>,
}

/// Corpus-level scores of a model on a set of examples.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub cer_mean: f64,
    pub cer_std: f64,
    pub sra: Option<f64>,
    pub hypotheses: Vec<String>,
}

/// Greedy-decode and score `items` of `ds`.
pub fn evaluate(model: &JointModel<f32>, ds: &Dataset, items: &[usize]) -> Result<EvalSummary> {
    let mut hyps = Vec::with_capacity(items.len());
    let mut preds = Vec::new();
    let mut targets = Vec::new();
    for &i in items {
        let ex = &ds.examples[i];
        let out = model.infer(&ex.features)?;
        hyps.push(ctc_greedy_decode(&out.speech_logits));
        if let Some(s) = out.speaker_logits {
            preds.push(argmax(&s));
            targets.push(ex.speaker);
        }
    }
    let pairs = items.iter().zip(&hyps).map(|(&i, h)| (ds.examples[i].transcript.as_str(), h.as_str()));
    let summary = corpus_cer(pairs, Averaging::Macro)?;
    let sra = if preds.is_empty() {
        None
    } else {
        Some(speaker_accuracy(&preds, &targets)?)
    };
    Ok(EvalSummary {
        cer_mean: summary.mean,
        cer_std: summary.std,
        sra,
        hypotheses: hyps,
    })
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `(held-out, training)` item positions. An item is held out when its
/// seeded index hash falls in the lowest `fraction` of the range.
pub fn heldout_split(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let threshold = (fraction.clamp(0.0, 1.0) * u64::MAX as f64) as u64;
    (0..n).partition(|&i| fraction > 0.0 && splitmix(seed ^ splitmix(i as u64)) < threshold)
}

struct StepLosses {
    joint: f64,
    ctc: f64,
    ce: Option<f64>,
}

fn check_compatible(config: &ModelConfig, ds: &Dataset) -> Result<()> {
    if config.vocab_size != CharVocab::SIZE {
        return Err(Error::Config(format!("training needs a {}-symbol vocabulary", CharVocab::SIZE)));
    }
    if config.use_speaker_branch != ds.joint {
        return Err(Error::Config("dataset features do not match the model's speaker branch setting".into()));
    }
    if let Some(ex) = ds.examples.first() {
        if ex.features.cols != config.d_model {
            return Err(Error::Config(format!("features are {}-d but the model takes {}", ex.features.cols, config.d_model)));
        }
    }
    if config.use_speaker_branch && config.n_speakers < ds.speakers.len() {
        return Err(Error::Config(format!(
            "{} speakers in the data but the speaker head has {} classes",
            ds.speakers.len(),
            config.n_speakers
        )));
    }
    Ok(())
}

/// One optimisation step over a batch; `None` if the loss was non-finite.
fn train_step(
    model: &mut JointModel<f32>,
    state: &mut AdamState,
    features: &[Matrix],
    masks: &[Vec<bool>],
    labels: &[Vec<usize>],
    speakers: &[usize],
    dropout_seed: u64,
) -> Result<Option<StepLosses>> {
    let mut tape = Tape::<f32>::new();
    let bound = model.bind(&mut tape);
    let refs: Vec<&Matrix> = features.iter().collect();
    let opts = ForwardOptions {
        train: true,
        positional: true,
        dropout_seed,
    };
    let outs = model.forward_batch(&mut tape, &bound, &refs, masks, &opts)?;
    let inv_b = 1.0 / outs.len() as f64;
    let v = model.config.vocab_size;
    let mut seeds: Vec<(crate::model::Var, Vec<f32>)> = Vec::new();
    let (mut ctc_total, mut ce_total) = (0.0, 0.0);
    for (k, out) in outs.iter().enumerate() {
        let n = masks[k].iter().filter(|&&m| m).count();
        let logits: Vec<f64> = tape.value(out.speech_logits).values[..n * v].iter().map(|&x| x as f64).collect();
        let c = match ctc_loss(&logits, v, &labels[k], CharVocab::BLANK) {
            Ok(c) => c,
            Err(Error::Domain(_)) => return Ok(None),
            Err(e) => return Err(e),
        };
        ctc_total += c.loss;
        let mut g: Vec<f32> = c.grad.iter().map(|&x| (x * inv_b) as f32).collect();
        g.resize(masks[k].len() * v, 0.0);
        seeds.push((out.speech_logits, g));
        if let Some(sv) = out.speaker_logits {
            let s: Vec<f64> = tape.value(sv).values.iter().map(|&x| x as f64).collect();
            let (ce, grad) = cross_entropy(&s, speakers[k])?;
            ce_total += ce;
            seeds.push((sv, grad.iter().map(|&x| (x * inv_b) as f32).collect()));
        }
    }
    let ce = model.config.use_speaker_branch.then_some(ce_total * inv_b);
    let losses = StepLosses {
        joint: joint_loss(ctc_total * inv_b, ce),
        ctc: ctc_total * inv_b,
        ce,
    };
    if !losses.joint.is_finite() {
        return Ok(None);
    }
    let seed_refs: Vec<(crate::model::Var, &[f32])> = seeds.iter().map(|(v, g)| (*v, g.as_slice())).collect();
    tape.backward(&seed_refs)?;
    model.zero_grad();
    model.accumulate_grads(&tape, &bound);
    match adam_step(model.tensors_mut(), state) {
        StepOutcome::Applied { .. } => Ok(Some(losses)),
        StepOutcome::Skipped => Ok(None),
    }
}

/// Train a freshly initialised model on `ds`.
///
/// Features are precomputed inputs, so the upstream encoders are never
/// updated. Aborts with [`Error::Divergence`] after three consecutive
/// non-finite steps.
pub fn train(config: &ModelConfig, ds: &Dataset, tc: &TrainConfig) -> Result<TrainReport> {
    check_compatible(config, ds)?;
    let mut model = JointModel::<f32>::init(config.clone(), tc.seed)?;
    let (heldout, train_items) = heldout_split(ds.len(), tc.heldout_fraction, tc.seed);
    let mut report = TrainReport {
        checkpoint: Checkpoint {
            model: model.clone(),
            speakers: ds.speakers.clone(),
        },
        log: Vec::new(),
        step_losses: Vec::new(),
        steps: 0,
        skipped_steps: 0,
        heldout: heldout.clone(),
    };
    if tc.epochs == 0 {
        return Ok(report);
    }
    if train_items.is_empty() {
        return Err(Error::Config("no training items left after the held-out split".into()));
    }
    let mut state = AdamState::new(tc.optimizer.clone(), model.tensors());
    let mut best = f64::INFINITY;
    let mut consecutive_bad = 0;
    let eval_every = tc.eval_every.max(1);
    'epochs: for epoch in 0..tc.epochs {
        let (mut sum_joint, mut sum_ctc, mut sum_ce, mut n_steps) = (0.0, 0.0, 0.0, 0usize);
        let mut out_of_steps = false;
        for batch in make_batches(ds, &train_items, tc.batch_size, tc.seed, epoch as u64) {
            let dropout_seed = splitmix(tc.seed ^ splitmix(report.steps + report.skipped_steps));
            match train_step(&mut model, &mut state, &batch.features, &batch.masks, &batch.labels, &batch.speakers, dropout_seed)? {
                Some(l) => {
                    consecutive_bad = 0;
                    report.steps += 1;
                    report.step_losses.push(l.joint);
                    sum_joint += l.joint;
                    sum_ctc += l.ctc;
                    sum_ce += l.ce.unwrap_or(0.0);
                    n_steps += 1;
                }
                None => {
                    consecutive_bad += 1;
                    report.skipped_steps += 1;
                    log::warn!("non-finite loss at step {}", report.steps + report.skipped_steps);
                    if consecutive_bad >= 3 {
                        return Err(Error::Divergence(format!(
                            "loss non-finite for 3 consecutive steps at epoch {epoch}, after {} good steps",
                            report.steps
                        )));
                    }
                }
            }
            if tc.max_steps.is_some_and(|m| report.steps >= m) {
                out_of_steps = true;
                break;
            }
        }
        let last = epoch + 1 == tc.epochs || out_of_steps;
        if (epoch + 1) % eval_every != 0 && !last {
            continue;
        }
        let train_eval = evaluate(&model, ds, &train_items)?;
        let held_eval = if heldout.is_empty() {
            None
        } else {
            Some(evaluate(&model, ds, &heldout)?)
        };
        let k = n_steps.max(1) as f64;
        let entry = EpochLog {
            epoch,
            step: report.steps,
            joint_loss: sum_joint / k,
            ctc_loss: sum_ctc / k,
            ce_loss: config.use_speaker_branch.then_some(sum_ce / k),
            heldout_cer: held_eval.as_ref().map(|e| e.cer_mean),
            heldout_sra: held_eval.as_ref().and_then(|e| e.sra),
            train_cer: train_eval.cer_mean,
            train_sra: train_eval.sra,
        };
        log::info!(
            "epoch {epoch} step {} loss {:.4} train cer {:.4}",
            entry.step,
            entry.joint_loss,
            entry.train_cer
        );
        let selection = entry.heldout_cer.unwrap_or(entry.train_cer);
        if selection < best {
            best = selection;
            report.checkpoint.model = model.clone();
        }
        report.log.push(entry);
        if let Some(stop) = tc.early_stop {
            let sra_ok = train_eval.sra.is_none_or(|s| s >= stop.min_sra);
            if train_eval.cer_mean < stop.max_cer && sra_ok {
                break 'epochs;
            }
        }
        if out_of_steps {
            break;
        }
    }
    Ok(report)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// The per-epoch log as CSV with header
/// `step,joint_loss,ctc_loss,ce_loss,heldout_cer,heldout_sra`.
pub fn log_csv(log: &[EpochLog]) -> String {
    let mut s = String::from("step,joint_loss,ctc_loss,ce_loss,heldout_cer,heldout_sra\n");
    for e in log {
        s.push_str(&format!(
            "{},{:.6},{:.6},{},{},{}\n",
            e.step,
            e.joint_loss,
            e.ctc_loss,
            opt(e.ce_loss),
            opt(e.heldout_cer),
            opt(e.heldout_sra)
        ));
    }
    s
}

pub fn write_log_csv(log: &[EpochLog], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(log_csv(log).as_bytes()).map_err(|e| Error::io(path, e))
}
