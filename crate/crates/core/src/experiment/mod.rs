//! Batch experiments: attribute × fold training jobs with resumable,
//! deterministic outputs, report assembly and the fictitious-input baseline.

mod config;
mod null;
mod runner;

use std::path::Path;

use thiserror::Error;

pub use config::{DatasetConfig, ExperimentConfig, Preset, ProtocolConfig, ResolvedExperiment};
pub use null::{null_baseline, NullOutcome, NullRow, WilcoxonSummary, NULL_FILE};
pub use runner::{
    load_dataset, read_results, render_report, run_experiment, write_reports, AttributeResult, FoldRecord, FoldRef,
    LoadedDataset, ResultsFile, RunManifest, RunSummary, FOLD_FILE, RESULTS_FILE, RESULTS_VERSION, RUN_MANIFEST_FILE,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
    #[error("missing checkpoint {0}")]
    MissingCheckpoints(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Dataset(#[from] crate::dataset::DatasetError),
    #[error(transparent)]
    Source(#[from] crate::dataset::SourceError),
    #[error(transparent)]
    Classifier(#[from] crate::classifier::ClassifierError),
    #[error(transparent)]
    Stats(#[from] crate::stats::StatsError),
    #[error(transparent)]
    Synth(#[from] crate::synth::SynthError),
    #[error(transparent)]
    Feature(#[from] crate::featurizer::FeatureError),
}

impl ExperimentError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        ExperimentError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Writes through a sibling temp file and a rename.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ExperimentError> {
    let tmp = path.with_extension("partial");
    std::fs::write(&tmp, bytes).map_err(|e| ExperimentError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| ExperimentError::io(path, e))
}
