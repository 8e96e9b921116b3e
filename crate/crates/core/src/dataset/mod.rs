//! Survey labels, attribute binarization, recording inventories and the
//! balanced Monte Carlo split protocol.

mod attribute;
mod manifest;
mod source;
mod split;
mod survey;

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::Real;

pub use attribute::{binarize, AttributeSpec, Binarized, Clause, Rule};
pub use manifest::{Inventory, Manifest, ManifestEntry, MAX_RECORDINGS_PER_USER};
pub use split::{
    labeled_users, make_split, monte_carlo_folds, resample_training, LabeledUser, SplitPlan,
    SplitSizes, TrainingSample, TRAIN_SAMPLES_PER_CLASS,
};
pub use source::{read_recording_file, RecordingSource, SourceError};
pub use survey::SurveyTable;

/// One side of a binarized attribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    A,
    B,
}

impl Label {
    pub const BOTH: [Label; 2] = [Label::A, Label::B];

    /// Training target: 0 for A, 1 for B.
    pub fn target<T: Real>(self) -> T {
        match self {
            Label::A => T::zero(),
            Label::B => T::one(),
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::A => "A",
            Label::B => "B",
        })
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("attribute `{attribute}`: user `{user}` has non-numeric value `{value}` for column `{column}`")]
    UnparsableValue {
        attribute: String,
        user: String,
        column: String,
        value: String,
    },
    #[error("class {class} has {have} eligible users, {need} needed")]
    InsufficientUsers { class: Label, have: usize, need: usize },
    #[error("class {0} has no training recordings")]
    EmptyClass(Label),
    #[error("invalid attribute spec `{name}`: {reason}")]
    InvalidSpec { name: String, reason: String },
    #[error("attribute `{attribute}` references column `{column}` missing from the survey table")]
    UnknownColumn { attribute: String, column: String },
    #[error("duplicate user `{0}` in survey table")]
    DuplicateUser(String),
    #[error("duplicate recording `{0}` in manifest")]
    DuplicateRecording(String),
    #[error("{path}: {reason}")]
    Malformed { path: PathBuf, reason: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
