//! Training objectives and evaluation metrics.

mod cross_entropy;
mod ctc;
mod decode;
mod metrics;
mod vocab;

pub use cross_entropy::{cross_entropy, joint_loss};
pub use ctc::{ctc_loss, log_softmax_rows, min_frames, CtcOutput};
pub use decode::{argmax, ctc_greedy_decode, greedy_path};
pub use metrics::{
    cer, corpus_cer, edit_counts, edit_counts_seq, speaker_accuracy, wer, Averaging, CerSummary, EditCounts,
};
pub use vocab::CharVocab;
