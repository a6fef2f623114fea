//! Joint speech and speaker recognition over fused frame-level speech
//! embeddings and utterance-level speaker embeddings, with the adversarial
//! evaluation protocols (multi-talker babble at controlled SNR, noise-vocoded
//! speech, sine-wave speech) used to probe robustness.

pub mod audio;
pub mod augment;
pub mod corpus;
pub mod embeddings;
pub mod error;
pub mod experiments;
pub mod losses;
pub mod model;
pub mod training;

pub use error::{Error, Result};
