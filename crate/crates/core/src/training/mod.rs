//! Text preparation, manifests, batching, optimisation and the training
//! loop.

mod dataset;
mod manifest;
mod optim;
mod text;
mod trainer;

pub use dataset::{batch_order, make_batches, record_features, record_waveform, waveform_features, Batch, Dataset, Example};
pub use manifest::{AudioRef, Manifest, ManifestRecord};
pub use optim::{adam_step, clip_scale, AdamConfig, AdamState, StepOutcome};
pub use text::{detokenize, normalize_text, tokenize};
pub use trainer::{evaluate, heldout_split, log_csv, train, write_log_csv, EarlyStop, EpochLog, EvalSummary, TrainConfig, TrainReport};
