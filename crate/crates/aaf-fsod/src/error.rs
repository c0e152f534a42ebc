//! Failure modes of the detection harness.

use aaf_core::AafError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid class split: {0}")]
    BadSplit(String),

    #[error("cannot sample {requested}-way episode from {available} classes")]
    NotEnoughClasses { requested: usize, available: usize },

    #[error("episode needs at least one support shot per class")]
    NoShots,

    #[error("image must be square with 3 channels, got shape {got:?}")]
    BadImage { got: Vec<usize> },

    #[error("training diverged at episode {episode}: loss {loss}")]
    Diverged { episode: usize, loss: f64 },

    #[error(transparent)]
    Core(#[from] AafError),

    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}
