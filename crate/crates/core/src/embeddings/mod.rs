//! Speech and speaker embeddings, their file format, and fusion into the
//! joint per-frame feature.

mod emb_file;
mod encoder;
mod matrix;

pub(crate) use emb_file::byte_checksum;
pub use emb_file::{emb_bytes, parse_emb, read_emb, write_emb};
pub use encoder::{
    synth_speaker_encode, synth_speech_encode, SPEAKER_PROJECTION_SEED, SPEECH_FRAME_HOP_MS, SPEECH_PROJECTION_SEED,
};
pub use matrix::Matrix;

use crate::error::{domain, Result};

pub const SPEECH_DIM: usize = 512;
pub const SPEAKER_DIM: usize = 192;
pub const JOINT_DIM: usize = SPEECH_DIM + SPEAKER_DIM;

/// Per-frame speech embeddings, `N × 512`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSequence {
    pub data: Matrix,
    pub frame_hop_ms: f64,
}

impl EmbeddingSequence {
    pub fn new(data: Matrix, frame_hop_ms: f64) -> Result<Self> {
        if data.rows == 0 || data.cols != SPEECH_DIM {
            return Err(domain!("speech embeddings must be N x {SPEECH_DIM} with N >= 1, got {}x{}", data.rows, data.cols));
        }
        if !data.is_finite() {
            return Err(domain!("non-finite speech embedding"));
        }
        Ok(Self { data, frame_hop_ms })
    }

    pub fn n_frames(&self) -> usize {
        self.data.rows
    }
}

/// Utterance-level speaker embedding, 192 values with non-zero norm.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerEmbedding {
    pub data: Vec<f32>,
}

impl SpeakerEmbedding {
    pub fn new(data: Vec<f32>) -> Result<Self> {
        if data.len() != SPEAKER_DIM {
            return Err(domain!("speaker embedding must have {SPEAKER_DIM} values, got {}", data.len()));
        }
        if data.iter().any(|v| !v.is_finite()) || data.iter().all(|&v| v == 0.0) {
            return Err(domain!("speaker embedding must be finite with non-zero norm"));
        }
        Ok(Self { data })
    }
}

/// `N × 704` joint features: speech columns then the broadcast speaker
/// vector.
#[derive(Debug, Clone, PartialEq)]
pub struct JointFeature {
    pub data: Matrix,
}

impl JointFeature {
    pub fn speech_part(&self) -> Matrix {
        self.data.slice_cols(0, SPEECH_DIM).expect("joint feature has 704 columns")
    }

    pub fn speaker_part(&self) -> Vec<f32> {
        self.data.row(0)[SPEECH_DIM..].to_vec()
    }
}

/// Concatenate the speaker embedding onto every speech frame.
pub fn fuse(speech: &EmbeddingSequence, speaker: &SpeakerEmbedding) -> JointFeature {
    let n = speech.n_frames();
    let mut data = Vec::with_capacity(n * JOINT_DIM);
    for r in 0..n {
        data.extend_from_slice(speech.data.row(r));
        data.extend_from_slice(&speaker.data);
    }
    JointFeature {
        data: Matrix {
            rows: n,
            cols: JOINT_DIM,
            data,
        },
    }
}
