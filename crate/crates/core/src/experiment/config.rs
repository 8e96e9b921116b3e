use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::classifier::ModelConfig;
use crate::dataset::{SplitSizes, MAX_RECORDINGS_PER_USER, TRAIN_SAMPLES_PER_CLASS};

/// Named bundle of model size and protocol sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Full-size model and the 10,000-per-class protocol.
    Paper,
    /// CPU-sized model: sequences of 128, 200 training sequences per class,
    /// 5 test and 5 validation users per class.
    Desk,
}

impl Preset {
    pub fn model(self) -> ModelConfig {
        match self {
            Preset::Paper => ModelConfig::paper(),
            Preset::Desk => ModelConfig::desk(),
        }
    }

    pub fn train_per_class(self) -> usize {
        match self {
            Preset::Paper => TRAIN_SAMPLES_PER_CLASS,
            Preset::Desk => 200,
        }
    }

    pub fn split_sizes(self) -> SplitSizes {
        match self {
            Preset::Paper => SplitSizes::default(),
            Preset::Desk => SplitSizes {
                test_per_class: 5,
                val_per_class: 5,
            },
        }
    }
}

/// Where the data comes from: files on disk, or a synthetic cohort spec
/// generated in memory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub survey: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    /// Attribute spec files or directories of them.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub attributes: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cohort: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_per_class: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_users_per_class: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_users_per_class: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_recordings_per_user: Option<usize>,
}

fn default_folds() -> usize {
    3
}

fn default_preset() -> Preset {
    Preset::Paper
}

/// An experiment file (TOML).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_preset")]
    pub preset: Preset,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub protocol: ProtocolConfig,
    /// Field-by-field overrides of the preset's model config.
    #[serde(default)]
    pub model: toml::Table,
}

/// Everything a run needs, with paths made absolute and defaults applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedExperiment {
    pub seed: u64,
    pub folds: usize,
    pub preset: Preset,
    pub dataset: DatasetConfig,
    /// Model config shared by every job; each job replaces `seed`.
    pub model: ModelConfig,
    pub train_per_class: usize,
    pub split: SplitSizes,
    pub max_recordings_per_user: usize,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ExperimentError> {
        toml::from_str(text).map_err(|e| ExperimentError::InvalidConfig(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// Applies defaults, resolves paths against `base` and validates.
    pub fn resolve(&self, base: &Path) -> Result<ResolvedExperiment, ExperimentError> {
        let bad = |m: String| Err(ExperimentError::InvalidConfig(m));
        if self.folds == 0 {
            return bad("folds must be at least 1".into());
        }
        let abs = |p: &PathBuf| if p.is_absolute() { p.clone() } else { base.join(p) };
        let d = &self.dataset;
        let dataset = DatasetConfig {
            survey: d.survey.as_ref().map(abs),
            manifest: d.manifest.as_ref().map(abs),
            attributes: d.attributes.iter().map(abs).collect(),
            cohort: d.cohort.as_ref().map(abs),
        };
        let files = dataset.survey.is_some() || dataset.manifest.is_some() || !dataset.attributes.is_empty();
        match (&dataset.cohort, files) {
            (Some(_), true) => return bad("give either `cohort` or survey/manifest/attributes, not both".into()),
            (None, false) => return bad("dataset needs `cohort` or survey, manifest and attributes".into()),
            (None, true) if dataset.survey.is_none() || dataset.manifest.is_none() || dataset.attributes.is_empty() => {
                return bad("dataset needs all of survey, manifest and attributes".into())
            }
            _ => {}
        }
        let paths = dataset
            .survey
            .iter()
            .chain(&dataset.manifest)
            .chain(&dataset.attributes)
            .chain(&dataset.cohort);
        for p in paths {
            if !p.exists() {
                return bad(format!("{} does not exist", p.display()));
            }
        }

        let mut model = serde_json::to_value(self.preset.model()).expect("model config serializes");
        for (k, v) in &self.model {
            let obj = model.as_object_mut().expect("object");
            if !obj.contains_key(k) {
                return bad(format!("unknown model field `{k}`"));
            }
            obj.insert(k.clone(), serde_json::to_value(v).expect("toml value converts"));
        }
        let model: ModelConfig =
            serde_json::from_value(model).map_err(|e| ExperimentError::InvalidConfig(format!("model: {e}")))?;
        model.validate().map_err(|e| ExperimentError::InvalidConfig(e.to_string()))?;

        let sizes = self.preset.split_sizes();
        let p = &self.protocol;
        let split = SplitSizes {
            test_per_class: p.test_users_per_class.unwrap_or(sizes.test_per_class),
            val_per_class: p.val_users_per_class.unwrap_or(sizes.val_per_class),
        };
        if split.test_per_class == 0 || split.val_per_class == 0 {
            return bad("test and validation users per class must be at least 1".into());
        }
        let max_recordings_per_user = p.max_recordings_per_user.unwrap_or(MAX_RECORDINGS_PER_USER);
        if max_recordings_per_user == 0 {
            return bad("max_recordings_per_user must be at least 1".into());
        }
        Ok(ResolvedExperiment {
            seed: self.seed,
            folds: self.folds,
            preset: self.preset,
            dataset,
            model,
            train_per_class: p.train_per_class.unwrap_or(self.preset.train_per_class()),
            split,
            max_recordings_per_user,
        })
    }
}

impl ResolvedExperiment {
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(self).expect("experiment serializes")
    }

    pub fn hash(&self) -> String {
        crate::rng::sha256_hex(self.to_canonical_json().as_bytes())
    }
}
