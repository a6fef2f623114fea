//! The joint transformer, its differentiable substrate, and checkpoints.

mod checkpoint;
mod config;
mod diff;
mod network;
#[cfg(test)]
mod tests;

pub use checkpoint::{checkpoint_bytes, load_checkpoint, load_checkpoint_as, parse_checkpoint, save_checkpoint, Checkpoint};
pub use config::{ModelConfig, Preset};
pub use diff::{DiffArray, Scalar, Tape, Var, LAYER_NORM_EPS};
pub use network::{positional_encoding, Bound, ForwardOptions, Inference, ItemOutput, JointModel};
