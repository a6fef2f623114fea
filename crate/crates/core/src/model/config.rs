use serde::{Deserialize, Serialize};

use crate::embeddings::{JOINT_DIM, SPEECH_DIM};
use crate::error::{Error, Result};
use crate::losses::CharVocab;

/// Architecture hyperparameters.
///
/// The input (`d_model`, 704 joint or 512 speech-only) is projected to the
/// working width `d_ff`, at which every layer and both heads operate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub n_speakers: usize,
    pub use_speaker_branch: bool,
    pub dropout: f64,
}

/// Named architecture sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Variant1,
    Variant2,
    Variant3,
    /// A small stack for tests and desk-scale runs.
    Tiny,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "variant1" | "v1" => Ok(Preset::Variant1),
            "variant2" | "v2" => Ok(Preset::Variant2),
            "variant3" | "v3" => Ok(Preset::Variant3),
            "tiny" => Ok(Preset::Tiny),
            other => Err(Error::Config(format!("unknown preset {other:?}"))),
        }
    }
}

impl ModelConfig {
    /// Joint model with `n_layers` layers of width `d_ff`.
    pub fn joint(n_layers: usize, d_ff: usize) -> Self {
        Self {
            n_layers,
            n_heads: 8,
            d_model: JOINT_DIM,
            d_ff,
            vocab_size: CharVocab::SIZE,
            n_speakers: 200,
            use_speaker_branch: true,
            dropout: 0.1,
        }
    }

    pub fn preset(p: Preset) -> Self {
        match p {
            Preset::Variant1 => Self::joint(2, 1024),
            Preset::Variant2 => Self::joint(4, 512),
            Preset::Variant3 => Self::joint(4, 1024),
            Preset::Tiny => Self::joint(2, 64),
        }
    }

    /// The speech-only variant: no speaker input columns and no speaker head.
    pub fn ablation(mut self) -> Self {
        self.d_model = SPEECH_DIM;
        self.use_speaker_branch = false;
        self
    }

    pub fn head_dim(&self) -> usize {
        self.d_ff / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_layers == 0 || self.n_heads == 0 || self.d_model == 0 || self.d_ff == 0 {
            return bad("layer count, heads and widths must be positive".into());
        }
        if !self.d_ff.is_multiple_of(self.n_heads) {
            return bad(format!("width {} is not divisible by {} heads", self.d_ff, self.n_heads));
        }
        if self.vocab_size < 2 {
            return bad("vocabulary needs at least two symbols".into());
        }
        if self.use_speaker_branch && self.n_speakers == 0 {
            return bad("speaker branch needs at least one speaker".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }

    /// Closed-form count of trainable scalars.
    pub fn parameter_count(&self) -> usize {
        let h = self.d_ff;
        let linear = |i: usize, o: usize| i * o + o;
        let per_layer = 4 * linear(h, h) + 2 * (2 * h) + linear(h, h) + linear(h, h);
        let speaker = if self.use_speaker_branch {
            linear(h, h) + linear(h, self.n_speakers)
        } else {
            0
        };
        linear(self.d_model, h) + self.n_layers * per_layer + linear(h, h) + linear(h, self.vocab_size) + speaker
    }
}
