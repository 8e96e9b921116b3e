use std::path::Path;

use thiserror::Error;

use super::Manifest;
use crate::telemetry::{parse_bsor, read_canonical, Recording, TelemetryError};

#[derive(Debug, Error)]
pub enum SourceError {
    #[error("unknown recording `{0}`")]
    UnknownRecording(String),
    #[error("{path}: {source}")]
    Telemetry {
        path: String,
        #[source]
        source: TelemetryError,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Other(String),
}

/// Anything that can produce a recording by id.
pub trait RecordingSource: Sync {
    fn load(&self, recording_id: &str) -> Result<Recording, SourceError>;
}

/// Parses a replay file, choosing the format by extension: `.bsor` is
/// binary, anything else canonical text.
pub fn read_recording_file(path: &Path) -> Result<Recording, SourceError> {
    let shown = path.display().to_string();
    let bytes = std::fs::read(path).map_err(|source| SourceError::Io {
        path: shown.clone(),
        source,
    })?;
    let parsed = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("bsor")) {
        parse_bsor(&bytes)
    } else {
        read_canonical(&bytes)
    };
    parsed.map_err(|source| SourceError::Telemetry { path: shown, source })
}

impl RecordingSource for Manifest {
    fn load(&self, recording_id: &str) -> Result<Recording, SourceError> {
        let entry = self
            .entry(recording_id)
            .ok_or_else(|| SourceError::UnknownRecording(recording_id.to_string()))?;
        let mut rec = read_recording_file(&self.resolve(entry))?;
        // The manifest is authoritative for identity.
        rec.recording_id = entry.recording_id.clone();
        rec.user_id = entry.user_id.clone();
        Ok(rec)
    }
}
