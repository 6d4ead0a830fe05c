//! Trainable CT window settings: differentiable linear and sigmoid display
//! windows learned jointly with a small CNN, plus the data, metrics and
//! experiment tooling around them.

pub mod cli;
pub mod data;
pub mod error;
pub mod format;
pub mod metrics;
pub mod nn;
pub mod optim;
pub mod tensor;
pub mod train;
pub mod windowing;
pub mod wso;

pub use error::{Error, Result};
