//! Deterministic synthetic cohorts with planted, known class signals.

mod motion;
mod spec;

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::dataset::{
    AttributeSpec, DatasetError, Label, Manifest, ManifestEntry, RecordingSource, Rule, SourceError, SurveyTable,
};
use crate::rng::{child_rng, derive_seed};
use crate::telemetry::{write_bsor, write_canonical, Recording, TelemetryError};

pub use motion::{generate_recording, generate_user, MotionProfile, HEAD_HEIGHT_RANGE};
pub use spec::{AttributePlan, CohortSpec, Signal};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid cohort spec: {0}")]
    InvalidSpec(String),
    #[error("invalid motion profile: {0}")]
    InvalidProfile(String),
    #[error(transparent)]
    Telemetry(#[from] TelemetryError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Population distribution of each profile parameter for class A; class B
/// users are shifted by the attribute's effect.
const HEIGHT_MEAN: f64 = 1.62;
const HEIGHT_SD: f64 = 0.04;
const FREQ_MEAN: f64 = 1.0;
const FREQ_SD: f64 = 0.05;
const AMP_MEAN: f64 = 0.25;
const AMP_SD: f64 = 0.02;
const ARM_MEAN: f64 = 0.70;
const ARM_SD: f64 = 0.03;

/// One synthetic participant.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthUser {
    pub user_id: String,
    pub seed: u64,
    pub profile: MotionProfile,
    pub labels: BTreeMap<String, Label>,
}

/// A generated dataset. Recordings are produced on demand from per-user
/// seeds, so a cohort can be used in memory or written to disk.
#[derive(Debug, Clone)]
pub struct Cohort {
    pub spec: CohortSpec,
    pub users: Vec<SynthUser>,
    pub survey: SurveyTable,
    pub manifest: Manifest,
    pub attributes: Vec<AttributeSpec>,
    by_recording: BTreeMap<String, (usize, usize)>,
}

/// Output format of written recordings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum RecordingFormat {
    Canonical,
    Bsor,
}

impl RecordingFormat {
    pub fn extension(self) -> &'static str {
        match self {
            RecordingFormat::Canonical => "txt",
            RecordingFormat::Bsor => "bsor",
        }
    }
}

const BASE_TIMESTAMP: i64 = 1_650_000_000;

fn recording_id(user_id: &str, r: usize) -> String {
    format!("{user_id}-r{r:03}")
}

/// Balanced labels for `2n` users, one independent permutation per attribute.
fn assign_labels(spec: &CohortSpec) -> Vec<BTreeMap<String, Label>> {
    let n = spec.users_per_class;
    let mut per_user = vec![BTreeMap::new(); 2 * n];
    for attr in &spec.attributes {
        let labels: Vec<Label> = match &attr.share_class_with {
            Some(other) => per_user.iter().map(|m: &BTreeMap<String, Label>| m[other]).collect(),
            None => {
                let mut v: Vec<Label> = std::iter::repeat(Label::A).take(n).chain(std::iter::repeat(Label::B).take(n)).collect();
                v.shuffle(&mut child_rng(spec.seed, &format!("labels-{}", attr.name)));
                v
            }
        };
        for (m, l) in per_user.iter_mut().zip(labels) {
            m.insert(attr.name.clone(), l);
        }
    }
    per_user
}

fn draw_profile(spec: &CohortSpec, user_seed: u64, labels: &BTreeMap<String, Label>) -> Result<MotionProfile, SynthError> {
    let mut rng = child_rng(user_seed, "profile");
    let z = Normal::new(0.0, 1.0).expect("unit normal");
    let mut height = HEIGHT_MEAN + HEIGHT_SD * z.sample(&mut rng);
    let mut freq = FREQ_MEAN + FREQ_SD * z.sample(&mut rng);
    let mut amp = AMP_MEAN + AMP_SD * z.sample(&mut rng);
    let mut arm = ARM_MEAN + ARM_SD * z.sample(&mut rng);
    let jitter = spec.noise * rng.gen_range(0.8..1.2);
    for attr in &spec.attributes {
        if labels[&attr.name] == Label::B {
            match attr.signal {
                Signal::Height => height += attr.effect,
                Signal::Frequency => freq += attr.effect,
                Signal::Amplitude => amp += attr.effect,
                Signal::ArmLength => arm += attr.effect,
                Signal::None => {}
            }
        }
    }
    let (lo, hi) = HEAD_HEIGHT_RANGE;
    MotionProfile::new(height.clamp(lo, hi), arm.clamp(0.3, 1.2), freq.max(0.05), amp.max(0.0), jitter)
}

/// Draws profiles and labels and builds the manifest and survey table.
pub fn generate_cohort(spec: &CohortSpec) -> Result<Cohort, SynthError> {
    spec.validate()?;
    let labels = assign_labels(spec);
    let mut users = Vec::with_capacity(labels.len());
    let mut survey = SurveyTable::new(spec.attributes.iter().map(|a| a.name.clone()));
    let mut entries = Vec::new();
    let mut by_recording = BTreeMap::new();
    for (i, labels) in labels.into_iter().enumerate() {
        let user_id = format!("u{i:04}");
        let seed = derive_seed(spec.seed, &format!("user-{i}"));
        let profile = draw_profile(spec, seed, &labels)?;
        for (attr, l) in &labels {
            survey.set(&user_id, attr, Some(&l.to_string()));
        }
        for r in 0..spec.recordings_per_user {
            let rid = recording_id(&user_id, r);
            entries.push(ManifestEntry {
                user_id: user_id.clone(),
                recording_id: rid.clone(),
                path: format!("recordings/{rid}.txt").into(),
                timestamp: BASE_TIMESTAMP + (i as i64) * 1_000_000 + (r as i64) * 3_600,
            });
            by_recording.insert(rid, (i, r));
        }
        users.push(SynthUser {
            user_id,
            seed,
            profile,
            labels,
        });
    }
    let attributes = spec
        .attributes
        .iter()
        .map(|a| {
            let mut s = AttributeSpec::new(&a.name, None, Rule::categorical(["A"]), Rule::categorical(["B"]))?;
            s.description = Some(format!("synthetic: signal {:?}, effect {}", a.signal, a.effect));
            Ok(s)
        })
        .collect::<Result<Vec<_>, DatasetError>>()?;
    Ok(Cohort {
        spec: spec.clone(),
        users,
        survey,
        manifest: Manifest::new(entries, Default::default())?,
        attributes,
        by_recording,
    })
}

/// Same spec with every planted signal removed: labels stay balanced but
/// carry no information about motion.
pub fn generate_null_cohort(spec: &CohortSpec) -> Result<Cohort, SynthError> {
    let mut null = spec.clone();
    for a in &mut null.attributes {
        a.signal = Signal::None;
        a.effect = 0.0;
    }
    generate_cohort(&null)
}

impl Cohort {
    pub fn recording(&self, user_index: usize, r: usize) -> Result<Recording, SynthError> {
        let u = &self.users[user_index];
        generate_recording(&u.profile, &u.user_id, &recording_id(&u.user_id, r), u.seed, r, &self.spec)
    }

    pub fn user_recordings(&self, user_index: usize) -> Result<Vec<Recording>, SynthError> {
        let u = &self.users[user_index];
        generate_user(&u.profile, &u.user_id, u.seed, &self.spec)
    }

    /// Writes `recordings/`, `manifest.csv`, `survey.csv`, `attributes/` and
    /// `cohort.toml` under `dir`. Output bytes depend only on the spec.
    pub fn write_dir(&self, dir: &Path, format: RecordingFormat) -> Result<(), SynthError> {
        use rayon::prelude::*;
        let rec_dir = dir.join("recordings");
        std::fs::create_dir_all(&rec_dir)?;
        std::fs::create_dir_all(dir.join("attributes"))?;
        (0..self.users.len()).into_par_iter().try_for_each(|i| -> Result<(), SynthError> {
            for rec in self.user_recordings(i)? {
                let bytes = match format {
                    RecordingFormat::Canonical => write_canonical(&rec)?,
                    RecordingFormat::Bsor => write_bsor(&rec)?,
                };
                std::fs::write(rec_dir.join(format!("{}.{}", rec.recording_id, format.extension())), bytes)?;
            }
            Ok(())
        })?;
        let entries = self
            .manifest
            .entries()
            .iter()
            .map(|e| ManifestEntry {
                path: format!("recordings/{}.{}", e.recording_id, format.extension()).into(),
                ..e.clone()
            })
            .collect();
        Manifest::new(entries, dir.to_path_buf())?.write_path(&dir.join("manifest.csv"))?;
        self.survey.write_path(&dir.join("survey.csv"))?;
        for a in &self.attributes {
            std::fs::write(dir.join("attributes").join(format!("{}.toml", a.name)), a.to_toml_string())?;
        }
        std::fs::write(dir.join("cohort.toml"), self.spec.to_toml_string())?;
        Ok(())
    }

    pub fn user_index(&self, user_id: &str) -> Option<usize> {
        self.users.iter().position(|u| u.user_id == user_id)
    }
}

impl RecordingSource for Cohort {
    fn load(&self, recording_id: &str) -> Result<Recording, SourceError> {
        let &(i, r) = self
            .by_recording
            .get(recording_id)
            .ok_or_else(|| SourceError::UnknownRecording(recording_id.to_string()))?;
        self.recording(i, r).map_err(|e| SourceError::Other(e.to_string()))
    }
}
