use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SynthError;

/// Which profile parameter an attribute shifts for class B users.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Signal {
    /// Head height, effect in meters.
    Height,
    /// Hand oscillation frequency, effect in Hz.
    Frequency,
    /// Hand oscillation amplitude, effect in meters.
    Amplitude,
    /// Arm length, effect in meters; moves the hands' working distance.
    #[serde(rename = "arm_length")]
    ArmLength,
    /// Labels carry no motion signal.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributePlan {
    pub name: String,
    pub signal: Signal,
    #[serde(default)]
    pub effect: f64,
    /// Copy class labels from an earlier attribute instead of drawing new ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub share_class_with: Option<String>,
}

fn d_recordings() -> usize {
    100
}
fn d_frames_min() -> usize {
    600
}
fn d_frames_max() -> usize {
    2000
}
fn d_rate() -> f64 {
    90.0
}
fn d_noise() -> f64 {
    0.01
}

/// Cohort definition, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortSpec {
    pub seed: u64,
    pub users_per_class: usize,
    #[serde(default = "d_recordings")]
    pub recordings_per_user: usize,
    #[serde(default = "d_frames_min")]
    pub frames_min: usize,
    #[serde(default = "d_frames_max")]
    pub frames_max: usize,
    /// Hz
    #[serde(default = "d_rate")]
    pub frame_rate: f64,
    /// Standard deviation of positional noise, meters.
    #[serde(default = "d_noise")]
    pub noise: f64,
    #[serde(default)]
    pub attributes: Vec<AttributePlan>,
}

impl CohortSpec {
    /// A single planted attribute with the default recording shape.
    pub fn single(seed: u64, users_per_class: usize, name: &str, signal: Signal, effect: f64) -> Self {
        Self {
            seed,
            users_per_class,
            recordings_per_user: d_recordings(),
            frames_min: d_frames_min(),
            frames_max: d_frames_max(),
            frame_rate: d_rate(),
            noise: d_noise(),
            attributes: vec![AttributePlan {
                name: name.to_string(),
                signal,
                effect,
                share_class_with: None,
            }],
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if self.users_per_class == 0 {
            return bad("users_per_class must be at least 1".into());
        }
        if self.recordings_per_user == 0 {
            return bad("recordings_per_user must be at least 1".into());
        }
        if self.frames_min == 0 || self.frames_min > self.frames_max {
            return bad(format!("frame range [{}, {}] is invalid", self.frames_min, self.frames_max));
        }
        if !(self.frame_rate.is_finite() && self.frame_rate > 0.0) {
            return bad(format!("frame_rate {} must be positive", self.frame_rate));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return bad(format!("noise {} must be non-negative", self.noise));
        }
        if self.attributes.is_empty() {
            return bad("at least one attribute is required".into());
        }
        let mut seen = BTreeSet::new();
        for a in &self.attributes {
            if a.name.is_empty() || a.name.contains(['/', '\\', ',', '\t', '\n']) {
                return bad(format!("attribute name `{}` is not usable as a column and file name", a.name));
            }
            if !(a.effect.is_finite() && a.effect >= 0.0) {
                return bad(format!("attribute `{}`: effect must be ≥ 0", a.name));
            }
            if let Some(other) = &a.share_class_with {
                if !seen.contains(other.as_str()) {
                    return bad(format!("attribute `{}` shares classes with unknown or later attribute `{other}`", a.name));
                }
            }
            if !seen.insert(a.name.as_str()) {
                return bad(format!("attribute `{}` defined twice", a.name));
            }
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, SynthError> {
        let spec: Self = toml::from_str(text).map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_path(path: &Path) -> Result<Self, SynthError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("cohort spec serializes")
    }
}
