//! The transformer binary classifier: construction, training with
//! best-epoch selection, per-sequence and per-user prediction, checkpoints.

mod checkpoint;
mod config;
mod model;
mod train;

use thiserror::Error;

use crate::nn::NnError;

pub use checkpoint::{load_checkpoint, load_checkpoint_for, save_checkpoint, CHECKPOINT_VERSION};
pub use config::ModelConfig;
pub use model::{parameter_layout, sequence_class, user_decision, Model};
pub use train::{
    sequence_accuracy, train, EpochRecord, Example, NullSink, ProgressSink, TrainedModel, VecSink,
};

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("input is {found:?}, model expects {expected:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("loss diverged (non-finite) in epoch {epoch}")]
    DivergedLoss { epoch: usize },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("validation set is empty")]
    EmptyValidationSet,
    #[error("zero epochs requested; there is no best epoch to select")]
    EmptyTrainingSchedule,
    #[error("user has no recordings")]
    NoRecordings,
    #[error("checkpoint version mismatch: {0}")]
    VersionMismatch(String),
    #[error("corrupt checkpoint: {0}")]
    CorruptPayload(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
