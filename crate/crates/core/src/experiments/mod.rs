//! Evaluation protocols under adversarial audio, their result tables and
//! plots.

mod plot;
mod protocols;
mod table;

pub use plot::{render_plot, render_svg};
pub use protocols::{
    eval_items_from_corpus, eval_items_from_manifest, run_augment, run_babble, AugmentOptions, AugmentRun, BabbleOptions,
    BabbleRun, EvalItem, ItemScore, Pair, PairSet, Scorer,
};
pub use table::{Condition, ResultRow, ResultTable, AUGMENT_EXPERIMENT, BABBLE_EXPERIMENT, RESULT_HEADER};
