//! Experiment harness: the ten-variant grid, training loop, evaluation and
//! checkpoints.

mod checkpoint;
mod grid;
mod trainer;
mod variant;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub use grid::{format_windows, run_grid, run_variant, GridOutcome, GridReport, GridRow};
pub use trainer::{
    build_model, evaluate, predict, predict_logits, train_model, EpochRecord, TrainHistory, TrainedModel,
};
pub use variant::{prepare_input, ExperimentVariant, InputMode, PresetChoice, VARIANT_COUNT};
