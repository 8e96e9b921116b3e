//! Fixed-shape model input from a recording.
//!
//! Row `i` holds frame `i`'s 21 coordinates (head, left hand, right hand;
//! each `px py pz qx qy qz qw`). Frames beyond the sequence length are
//! dropped, shorter recordings are zero-padded, and values are copied as-is
//! with no resampling or normalization.

use std::fmt::Write as _;

use rayon::prelude::*;
use thiserror::Error;

use crate::telemetry::{Recording, FRAME_WIDTH};

/// Sequence length used by the reference model input.
pub const SEQ_LEN: usize = 1024;
pub const FEATURE_WIDTH: usize = FRAME_WIDTH;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("recording {recording_id:?} has no frames")]
    EmptyRecording { recording_id: String },
    #[error("sequence length must be at least 1")]
    ZeroLength,
    #[error("feature text line {line}: {reason}")]
    MalformedText { line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    values: Vec<f32>,
    valid_rows: usize,
}

impl FeatureMatrix {
    pub fn zeros(rows: usize) -> Self {
        Self {
            rows,
            values: vec![0.0; rows * FEATURE_WIDTH],
            valid_rows: 0,
        }
    }

    /// Builds a matrix from row-major values; rows past `valid_rows` must be zero.
    pub fn from_rows(rows: usize, values: Vec<f32>, valid_rows: usize) -> Self {
        assert_eq!(values.len(), rows * FEATURE_WIDTH, "row-major buffer size");
        assert!(valid_rows <= rows);
        Self {
            rows,
            values,
            valid_rows,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        FEATURE_WIDTH
    }

    pub fn valid_rows(&self) -> usize {
        self.valid_rows
    }

    /// Row-major `rows × 21` buffer.
    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * FEATURE_WIDTH..(i + 1) * FEATURE_WIDTH]
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.values[row * FEATURE_WIDTH + col]
    }

    /// One row per line, 21 shortest-round-trip decimals each. A leading
    /// `# rows=<n> valid=<k>` line records the shape.
    pub fn to_text(&self) -> String {
        let mut out = format!("# rows={} valid={}\n", self.rows, self.valid_rows);
        for r in 0..self.rows {
            let row = self.row(r);
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, FeatureError> {
        let mut lines = text.lines().enumerate();
        let malformed = |line: usize, reason: String| FeatureError::MalformedText { line, reason };
        let (_, header) = lines
            .next()
            .ok_or_else(|| malformed(1, "empty input".into()))?;
        let mut rows = None;
        let mut valid = None;
        for tok in header.trim_start_matches('#').split_whitespace() {
            if let Some(v) = tok.strip_prefix("rows=") {
                rows = v.parse::<usize>().ok();
            } else if let Some(v) = tok.strip_prefix("valid=") {
                valid = v.parse::<usize>().ok();
            }
        }
        let (rows, valid) = rows
            .zip(valid)
            .filter(|(r, v)| v <= r)
            .ok_or_else(|| malformed(1, format!("bad shape header {header:?}")))?;
        let mut values = Vec::with_capacity(rows * FEATURE_WIDTH);
        for (idx, line) in lines {
            let before = values.len();
            for tok in line.split_whitespace() {
                values.push(
                    tok.parse::<f32>()
                        .map_err(|_| malformed(idx + 1, format!("cannot parse {tok:?}")))?,
                );
            }
            if values.len() - before != FEATURE_WIDTH {
                return Err(malformed(
                    idx + 1,
                    format!("expected {FEATURE_WIDTH} values, found {}", values.len() - before),
                ));
            }
        }
        if values.len() != rows * FEATURE_WIDTH {
            return Err(malformed(0, format!("expected {rows} rows")));
        }
        Ok(Self::from_rows(rows, values, valid))
    }
}

/// Featurizes with the reference length of 1,024 rows.
pub fn featurize(rec: &Recording) -> Result<FeatureMatrix, FeatureError> {
    featurize_with_len(rec, SEQ_LEN)
}

/// Featurizes into `seq_len` rows: the first `seq_len` frames, zero-padded.
pub fn featurize_with_len(rec: &Recording, seq_len: usize) -> Result<FeatureMatrix, FeatureError> {
    if seq_len == 0 {
        return Err(FeatureError::ZeroLength);
    }
    if rec.frames.is_empty() {
        return Err(FeatureError::EmptyRecording {
            recording_id: rec.recording_id.clone(),
        });
    }
    let valid_rows = rec.frames.len().min(seq_len);
    let mut values = vec![0.0f32; seq_len * FEATURE_WIDTH];
    for (row, frame) in values
        .chunks_exact_mut(FEATURE_WIDTH)
        .zip(&rec.frames[..valid_rows])
    {
        row.copy_from_slice(&frame.coords());
    }
    Ok(FeatureMatrix {
        rows: seq_len,
        values,
        valid_rows,
    })
}

/// Element-wise [`featurize_with_len`], in input order.
pub fn featurize_batch(
    recordings: &[Recording],
    seq_len: usize,
) -> Result<Vec<FeatureMatrix>, FeatureError> {
    recordings
        .par_iter()
        .map(|r| featurize_with_len(r, seq_len))
        .collect()
}
