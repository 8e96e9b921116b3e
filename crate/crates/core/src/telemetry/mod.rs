//! Motion telemetry: tracked poses, frames and recordings, plus the two file
//! formats they travel in (BSOR binary replays and the line-oriented
//! canonical text format).

mod bsor;
mod canonical;

use std::collections::BTreeMap;

use thiserror::Error;

pub use bsor::{parse_bsor, write_bsor, BSOR_MAGIC, BSOR_VERSION};
pub use canonical::{read_canonical, write_canonical};

/// Number of scalar coordinates in one pose (3 position + 4 orientation).
pub const POSE_WIDTH: usize = 7;
/// Number of scalar coordinates in one frame (head, left hand, right hand).
pub const FRAME_WIDTH: usize = 3 * POSE_WIDTH;

/// Accepted band for the orientation quaternion norm. Values outside are
/// reported by [`Recording::validate`] but never renormalized.
pub const QUATERNION_NORM_BAND: (f32, f32) = (0.5, 2.0);

#[derive(Debug, Error, PartialEq)]
pub enum TelemetryError {
    #[error("bad magic word {found:#010x}")]
    BadMagic { found: u32 },
    #[error("unsupported BSOR file version {0}")]
    UnsupportedVersion(u8),
    #[error("truncated {section} section: needs {needed} bytes, {remaining} remain")]
    TruncatedSection {
        section: &'static str,
        needed: u64,
        remaining: u64,
    },
    #[error("negative element count {count} in {section} section")]
    NegativeCount { section: &'static str, count: i64 },
    #[error("non-finite value in frame {frame} ({field})")]
    NonFiniteValue { frame: usize, field: &'static str },
    #[error("line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("missing header record")]
    MissingHeader,
    #[error("metadata key {key:?} holds {value:?}, which does not fit its BSOR field")]
    InvalidMetadata { key: String, value: String },
}

/// Position in meters and orientation quaternion `(x, y, z, w)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose {
    pub position: [f32; 3],
    pub orientation: [f32; 4],
}

impl Pose {
    pub fn new(position: [f32; 3], orientation: [f32; 4]) -> Self {
        Self {
            position,
            orientation,
        }
    }

    /// Seven coordinates: `px py pz qx qy qz qw`.
    pub fn coords(&self) -> [f32; POSE_WIDTH] {
        let [px, py, pz] = self.position;
        let [qx, qy, qz, qw] = self.orientation;
        [px, py, pz, qx, qy, qz, qw]
    }

    pub fn from_coords(c: &[f32]) -> Self {
        Self {
            position: [c[0], c[1], c[2]],
            orientation: [c[3], c[4], c[5], c[6]],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.coords().iter().all(|v| v.is_finite())
    }

    pub fn quaternion_norm(&self) -> f32 {
        self.orientation.iter().map(|q| q * q).sum::<f32>().sqrt()
    }
}

/// One sampling instant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Frame {
    /// Seconds since recording start.
    pub time: f32,
    /// Frame rate reported by the device at this frame.
    pub fps: i32,
    pub head: Pose,
    pub left_hand: Pose,
    pub right_hand: Pose,
}

impl Frame {
    /// The 21 coordinates in fixed order: head, left hand, right hand, each
    /// as `px py pz qx qy qz qw`. Time and fps are not included.
    pub fn coords(&self) -> [f32; FRAME_WIDTH] {
        let mut out = [0.0; FRAME_WIDTH];
        for (i, pose) in [&self.head, &self.left_hand, &self.right_hand]
            .into_iter()
            .enumerate()
        {
            out[i * POSE_WIDTH..(i + 1) * POSE_WIDTH].copy_from_slice(&pose.coords());
        }
        out
    }

    pub fn from_coords(time: f32, fps: i32, c: &[f32; FRAME_WIDTH]) -> Self {
        Self {
            time,
            fps,
            head: Pose::from_coords(&c[0..7]),
            left_hand: Pose::from_coords(&c[7..14]),
            right_hand: Pose::from_coords(&c[14..21]),
        }
    }

    /// Returns the name of the first non-finite field, if any.
    pub(crate) fn first_non_finite(&self) -> Option<&'static str> {
        if !self.time.is_finite() {
            return Some("time");
        }
        if !self.head.is_finite() {
            return Some("head");
        }
        if !self.left_hand.is_finite() {
            return Some("left_hand");
        }
        if !self.right_hand.is_finite() {
            return Some("right_hand");
        }
        None
    }
}

/// Invariant violations reported by [`Recording::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NonFinite { frame: usize, field: &'static str },
    NegativeTime { frame: usize },
    QuaternionNorm { frame: usize, pose: &'static str, norm: f32 },
}

/// An ordered sequence of frames from one play session of one user.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Recording {
    pub recording_id: String,
    pub user_id: String,
    /// Frames in file order. Never re-sorted.
    pub frames: Vec<Frame>,
    pub metadata: BTreeMap<String, String>,
}

impl Recording {
    pub fn new(recording_id: impl Into<String>, user_id: impl Into<String>) -> Self {
        Self {
            recording_id: recording_id.into(),
            user_id: user_id.into(),
            ..Self::default()
        }
    }

    /// Checks the pose and frame invariants; an empty list means valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let (lo, hi) = QUATERNION_NORM_BAND;
        for (i, frame) in self.frames.iter().enumerate() {
            if let Some(field) = frame.first_non_finite() {
                out.push(Violation::NonFinite { frame: i, field });
                continue;
            }
            if frame.time < 0.0 {
                out.push(Violation::NegativeTime { frame: i });
            }
            for (name, pose) in [
                ("head", &frame.head),
                ("left_hand", &frame.left_hand),
                ("right_hand", &frame.right_hand),
            ] {
                let norm = pose.quaternion_norm();
                if !(lo..=hi).contains(&norm) {
                    out.push(Violation::QuaternionNorm {
                        frame: i,
                        pose: name,
                        norm,
                    });
                }
            }
        }
        out
    }

    /// Index of the first frame whose time is earlier than its predecessor.
    pub fn first_time_regression(&self) -> Option<usize> {
        self.frames
            .windows(2)
            .position(|w| w[1].time < w[0].time)
            .map(|i| i + 1)
    }
}

pub(crate) fn check_finite(frames: &[Frame]) -> Result<(), TelemetryError> {
    for (i, frame) in frames.iter().enumerate() {
        if let Some(field) = frame.first_non_finite() {
            return Err(TelemetryError::NonFiniteValue { frame: i, field });
        }
    }
    Ok(())
}

pub(crate) fn warn_on_raw_irregularities(rec: &Recording) {
    if let Some(i) = rec.first_time_regression() {
        log::warn!(
            "recording {:?}: frame times decrease at frame {i}; kept in file order",
            rec.recording_id
        );
    }
    let bad_norms = rec
        .validate()
        .iter()
        .filter(|v| matches!(v, Violation::QuaternionNorm { .. }))
        .count();
    if bad_norms > 0 {
        log::warn!(
            "recording {:?}: {bad_norms} orientations outside the quaternion norm band",
            rec.recording_id
        );
    }
}
