use serde::{Deserialize, Serialize};

use crate::model::{DiffArray, Scalar};

/// Adam hyperparameters with linear warm-up and global-norm clipping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub clip_norm: f64,
    pub warmup_steps: u64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: 5.0,
            warmup_steps: 500,
        }
    }
}

impl AdamConfig {
    /// Learning rate for 1-based step `step`.
    pub fn lr_at(&self, step: u64) -> f64 {
        if self.warmup_steps == 0 {
            self.lr
        } else {
            self.lr * (step as f64 / self.warmup_steps as f64).min(1.0)
        }
    }
}

/// Moment accumulators, shaped like the parameters they follow.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
    pub skipped: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    /// `scale` is the clipping factor applied to the gradient (1 if none).
    Applied { grad_norm: f64, scale: f64 },
    /// Non-finite gradient; nothing changed.
    Skipped,
}

/// Factor bringing a gradient of norm `norm` within `clip`.
pub fn clip_scale(norm: f64, clip: f64) -> f64 {
    if norm > clip && norm > 0.0 {
        clip / norm
    } else {
        1.0
    }
}

impl AdamState {
    pub fn new<T: Scalar>(config: AdamConfig, params: &[DiffArray<T>]) -> Self {
        Self {
            config,
            m: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            step: 0,
            skipped: 0,
        }
    }
}

/// One bias-corrected Adam update from the gradients stored in `params`.
pub fn adam_step<T: Scalar>(params: &mut [DiffArray<T>], state: &mut AdamState) -> StepOutcome {
    let sq: f64 = params
        .iter()
        .flat_map(|p| p.grad.iter())
        .map(|g| g.to_f64().unwrap().powi(2))
        .sum();
    let norm = sq.sqrt();
    if !norm.is_finite() {
        state.skipped += 1;
        log::warn!("skipping optimizer step: non-finite gradient");
        return StepOutcome::Skipped;
    }
    let c = &state.config;
    let scale = clip_scale(norm, c.clip_norm);
    state.step += 1;
    let t = state.step as i32;
    let lr = c.lr_at(state.step);
    let (bc1, bc2) = (1.0 - c.beta1.powi(t), 1.0 - c.beta2.powi(t));
    for ((p, m), v) in params.iter_mut().zip(&mut state.m).zip(&mut state.v) {
        for i in 0..p.len() {
            let g = p.grad[i].to_f64().unwrap() * scale;
            m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
            v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
            let update = lr * (m[i] / bc1) / ((v[i] / bc2).sqrt() + c.eps);
            p.values[i] = p.values[i] - T::of(update);
        }
    }
    StepOutcome::Applied { grad_norm: norm, scale }
}
