use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{write_atomic, ExperimentError, NullOutcome, Preset, ResolvedExperiment};
use crate::classifier::{save_checkpoint, train, EpochRecord, Example, Model, ModelConfig, TrainedModel};
use crate::dataset::{
    binarize, labeled_users, monte_carlo_folds, resample_training, AttributeSpec, Inventory, LabeledUser, Manifest,
    RecordingSource, SplitPlan, SurveyTable,
};
use crate::featurizer::{featurize_with_len, FeatureMatrix};
use crate::rng::{derive_seed, sha256_hex};
use crate::stats::{evaluate_attribute, predict_fold, EvalReport, EvalRow, FoldResult, TestUser};
use crate::synth::{generate_cohort, CohortSpec};

pub const RESULTS_FILE: &str = "results.json";
pub const RUN_MANIFEST_FILE: &str = "run_manifest.json";
pub const FOLD_FILE: &str = "fold.json";
pub const RESULTS_VERSION: u32 = 1;
const CHECKPOINT_FILE: &str = "checkpoint.bin";
const EPOCHS_FILE: &str = "epochs.tsv";

/// Survey, inventory, attribute rules and a way to load recordings.
pub struct LoadedDataset {
    pub survey: SurveyTable,
    pub inventory: Inventory,
    pub attributes: Vec<AttributeSpec>,
    pub source: Box<dyn RecordingSource + Send>,
}

fn load_attributes(paths: &[PathBuf]) -> Result<Vec<AttributeSpec>, ExperimentError> {
    let mut specs = Vec::new();
    for p in paths {
        if p.is_dir() {
            specs.extend(AttributeSpec::load_dir(p)?);
        } else {
            specs.push(AttributeSpec::from_path(p)?);
        }
    }
    specs.sort_by(|a, b| a.name.cmp(&b.name));
    if let Some(w) = specs.windows(2).find(|w| w[0].name == w[1].name) {
        return Err(ExperimentError::InvalidConfig(format!("attribute `{}` defined twice", w[0].name)));
    }
    Ok(specs)
}

pub fn load_dataset(exp: &ResolvedExperiment) -> Result<LoadedDataset, ExperimentError> {
    let d = &exp.dataset;
    if let Some(cohort) = &d.cohort {
        let spec = CohortSpec::from_path(cohort)?;
        let cohort = generate_cohort(&spec)?;
        let inventory = Inventory::from_manifest_capped(&cohort.manifest, exp.max_recordings_per_user);
        let mut attributes = cohort.attributes.clone();
        attributes.sort_by(|a, b| a.name.cmp(&b.name));
        return Ok(LoadedDataset {
            survey: cohort.survey.clone(),
            inventory,
            attributes,
            source: Box::new(cohort),
        });
    }
    let (survey, manifest) = match (&d.survey, &d.manifest) {
        (Some(s), Some(m)) => (s, m),
        _ => return Err(ExperimentError::InvalidConfig("dataset needs survey and manifest".into())),
    };
    let manifest = Manifest::from_path(manifest)?;
    Ok(LoadedDataset {
        survey: SurveyTable::from_path(survey)?,
        inventory: Inventory::from_manifest_capped(&manifest, exp.max_recordings_per_user),
        attributes: load_attributes(&d.attributes)?,
        source: Box::new(manifest),
    })
}

/// Contents of a job's `fold.json`; written last, so its presence marks a
/// finished job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub version: u32,
    pub attribute: String,
    pub fold: usize,
    pub fold_seed: u64,
    pub job_hash: String,
    pub model: ModelConfig,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
    pub test_users: Vec<LabeledUser>,
    pub result: FoldResult,
}

/// Pointer from the results file to one job directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRef {
    pub fold: usize,
    pub fold_seed: u64,
    /// Relative to the results directory.
    pub job: String,
    pub best_epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeResult {
    pub name: String,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub total_users: usize,
    pub total_sequences: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub row: Option<EvalRow>,
    pub folds: Vec<FoldRef>,
}

/// The machine-readable outcome of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsFile {
    pub format: String,
    pub version: u32,
    pub experiment_hash: String,
    pub seed: u64,
    pub preset: Preset,
    pub folds: usize,
    pub attributes: Vec<AttributeResult>,
}

impl ResultsFile {
    pub fn report(&self) -> EvalReport {
        EvalReport {
            rows: self.attributes.iter().filter_map(|a| a.row.clone()).collect(),
        }
    }

    pub fn attribute(&self, name: &str) -> Option<&AttributeResult> {
        self.attributes.iter().find(|a| a.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobEntry {
    pub attribute: String,
    pub fold: usize,
    pub hash: String,
    pub dir: String,
    pub model_seed: u64,
    pub resample_seed: u64,
}

/// Config, seeds and versions of a run, written next to the results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub tool_version: String,
    pub experiment_hash: String,
    pub experiment: ResolvedExperiment,
    pub jobs: Vec<JobEntry>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub results: ResultsFile,
    pub trained: usize,
    pub resumed: usize,
}

impl RunSummary {
    pub fn all_ok(&self) -> bool {
        self.results.attributes.iter().all(|a| a.ok)
    }
}

struct Job<'a> {
    attribute: &'a AttributeSpec,
    plan: SplitPlan,
    model: ModelConfig,
    resample_seed: u64,
    hash: String,
    dir: String,
}

fn job_hash(exp: &ResolvedExperiment, spec: &AttributeSpec, plan: &SplitPlan, model: &ModelConfig, resample_seed: u64) -> String {
    let key = serde_json::json!({
        "version": RESULTS_VERSION,
        "attribute": spec,
        "plan": plan,
        "model": model,
        "train_per_class": exp.train_per_class,
        "resample_seed": resample_seed,
    });
    sha256_hex(key.to_string().as_bytes())
}

/// Loads each id once and featurizes it to `seq_len` rows.
fn featurize_ids<'a>(
    source: &dyn RecordingSource,
    ids: impl IntoIterator<Item = &'a str>,
    seq_len: usize,
) -> Result<BTreeMap<String, FeatureMatrix>, ExperimentError> {
    let mut out = BTreeMap::new();
    for id in ids {
        if !out.contains_key(id) {
            let rec = source.load(id)?;
            out.insert(id.to_string(), featurize_with_len(&rec, seq_len)?);
        }
    }
    Ok(out)
}

pub(crate) fn test_users<'a>(users: &[LabeledUser], features: &'a BTreeMap<String, FeatureMatrix>) -> Vec<TestUser<'a>> {
    users
        .iter()
        .map(|u| TestUser {
            user_id: u.user_id.clone(),
            label: u.label,
            sequences: u.recording_ids.iter().map(|id| &features[id]).collect(),
        })
        .collect()
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ExperimentError> {
    let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| ExperimentError::Format(format!("{}: {e}", path.display())))
}

fn to_json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("serializes");
    s.push('\n');
    s.into_bytes()
}

fn run_job(job: &Job<'_>, out: &Path, exp: &ResolvedExperiment, source: &dyn RecordingSource) -> Result<(FoldRecord, bool), ExperimentError> {
    let dir = out.join(&job.dir);
    let fold_path = dir.join(FOLD_FILE);
    if fold_path.exists() {
        if let Ok(rec) = read_json::<FoldRecord>(&fold_path) {
            if rec.job_hash == job.hash && dir.join(CHECKPOINT_FILE).exists() {
                log::info!("{} fold {}: already complete, skipping", job.attribute.name, job.plan.fold);
                return Ok((rec, true));
            }
        }
    }
    std::fs::create_dir_all(&dir).map_err(|e| ExperimentError::io(&dir, e))?;

    let plan = &job.plan;
    let samples = resample_training(plan, exp.train_per_class, job.resample_seed)?;
    let ids = samples
        .iter()
        .map(|s| s.recording_id.as_str())
        .chain(plan.val.iter().chain(&plan.test).flat_map(|u| u.recording_ids.iter().map(String::as_str)));
    let features = featurize_ids(source, ids, job.model.seq_len)?;
    let train_set: Vec<Example<'_>> = samples
        .iter()
        .map(|s| Example {
            features: &features[&s.recording_id],
            label: s.label,
        })
        .collect();
    let val_set: Vec<Example<'_>> = plan
        .val
        .iter()
        .flat_map(|u| {
            u.recording_ids.iter().map(|id| Example {
                features: &features[id],
                label: u.label,
            })
        })
        .collect();

    let (name, fold) = (&job.attribute.name, plan.fold);
    let sink = |r: &EpochRecord| {
        log::info!(
            "{name} fold {fold}: epoch {} loss {:.5} val acc {:.4}",
            r.epoch,
            r.train_loss,
            r.val_accuracy
        )
    };
    let trained: TrainedModel = train(Model::new(job.model.clone())?, &train_set, &val_set, &sink)?;
    save_checkpoint(&trained, &dir.join(CHECKPOINT_FILE))?;

    let mut epochs = String::from("epoch\ttrain_loss\tval_accuracy\n");
    for r in &trained.history {
        epochs.push_str(&format!("{}\t{}\t{}\n", r.epoch, r.train_loss, r.val_accuracy));
    }
    write_atomic(&dir.join(EPOCHS_FILE), epochs.as_bytes())?;

    let result = predict_fold(&trained.model, fold, &test_users(&plan.test, &features))?;
    let record = FoldRecord {
        version: RESULTS_VERSION,
        attribute: name.clone(),
        fold,
        fold_seed: plan.fold_seed,
        job_hash: job.hash.clone(),
        model: job.model.clone(),
        best_epoch: trained.best_epoch,
        history: trained.history,
        test_users: plan.test.clone(),
        result,
    };
    write_atomic(&fold_path, &to_json(&record))?;
    Ok((record, false))
}

/// Runs every attribute × fold job (skipping finished ones), then writes
/// `results.json`, `report.tsv`, `report.txt` and `run_manifest.json`.
/// A failing attribute is recorded and the others continue.
pub fn run_experiment(exp: &ResolvedExperiment, out: &Path, jobs: usize) -> Result<RunSummary, ExperimentError> {
    std::fs::create_dir_all(out).map_err(|e| ExperimentError::io(out, e))?;
    let ds = load_dataset(exp)?;
    let experiment_hash = exp.hash();

    let mut attributes: Vec<AttributeResult> = Vec::new();
    let mut all_jobs: Vec<Job<'_>> = Vec::new();
    for spec in &ds.attributes {
        let mut result = AttributeResult {
            name: spec.name.clone(),
            ok: false,
            error: None,
            total_users: 0,
            total_sequences: 0,
            row: None,
            folds: Vec::new(),
        };
        let plans = binarize(&ds.survey, spec).and_then(|labels| {
            let users = labeled_users(&labels, &ds.inventory);
            result.total_users = users.len();
            result.total_sequences = users.iter().map(|u| u.recording_ids.len()).sum();
            monte_carlo_folds(&spec.name, &users, exp.seed, exp.folds, exp.split)
        });
        match plans {
            Ok(plans) => {
                for plan in plans {
                    let model = ModelConfig {
                        seed: derive_seed(exp.seed, &format!("model-{}-{}", spec.name, plan.fold)),
                        ..exp.model.clone()
                    };
                    let resample_seed = derive_seed(exp.seed, &format!("resample-{}-{}", spec.name, plan.fold));
                    let hash = job_hash(exp, spec, &plan, &model, resample_seed);
                    let dir = format!("jobs/{}/fold{}-{}", spec.name, plan.fold, &hash[..12]);
                    all_jobs.push(Job {
                        attribute: spec,
                        plan,
                        model,
                        resample_seed,
                        hash,
                        dir,
                    });
                }
            }
            Err(e) => {
                log::warn!("{}: {e}", spec.name);
                result.error = Some(e.to_string());
            }
        }
        attributes.push(result);
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| ExperimentError::InvalidConfig(format!("thread pool: {e}")))?;
    let source: &dyn RecordingSource = ds.source.as_ref();
    let outcomes: Vec<Result<(FoldRecord, bool), ExperimentError>> =
        pool.install(|| all_jobs.par_iter().map(|j| run_job(j, out, exp, source)).collect());

    let (mut trained, mut resumed) = (0, 0);
    let mut by_attr: BTreeMap<&str, Vec<(&Job<'_>, Result<FoldRecord, String>)>> = BTreeMap::new();
    for (job, outcome) in all_jobs.iter().zip(outcomes) {
        let outcome = match outcome {
            Ok((rec, was_resumed)) => {
                if was_resumed {
                    resumed += 1;
                } else {
                    trained += 1;
                }
                Ok(rec)
            }
            Err(e) => {
                log::warn!("{} fold {}: {e}", job.attribute.name, job.plan.fold);
                Err(e.to_string())
            }
        };
        by_attr.entry(job.attribute.name.as_str()).or_default().push((job, outcome));
    }
    for result in &mut attributes {
        let Some(entries) = by_attr.get(result.name.as_str()) else { continue };
        if let Some((job, Err(e))) = entries.iter().find(|(_, o)| o.is_err()) {
            result.error = Some(format!("fold {}: {e}", job.plan.fold));
            continue;
        }
        let records: Vec<&FoldRecord> = entries.iter().filter_map(|(_, o)| o.as_ref().ok()).collect();
        result.folds = entries
            .iter()
            .zip(&records)
            .map(|((job, _), rec)| FoldRef {
                fold: rec.fold,
                fold_seed: rec.fold_seed,
                job: job.dir.clone(),
                best_epoch: rec.best_epoch,
            })
            .collect();
        let fold_results: Vec<FoldResult> = records.iter().map(|r| r.result.clone()).collect();
        match evaluate_attribute(&result.name, result.total_users, result.total_sequences, &fold_results) {
            Ok(row) => {
                result.row = Some(row);
                result.ok = true;
            }
            Err(e) => result.error = Some(e.to_string()),
        }
    }

    let results = ResultsFile {
        format: "motionleak-results".into(),
        version: RESULTS_VERSION,
        experiment_hash: experiment_hash.clone(),
        seed: exp.seed,
        preset: exp.preset,
        folds: exp.folds,
        attributes,
    };
    let manifest = RunManifest {
        format: "motionleak-run".into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        experiment_hash,
        experiment: exp.clone(),
        jobs: all_jobs
            .iter()
            .map(|j| JobEntry {
                attribute: j.attribute.name.clone(),
                fold: j.plan.fold,
                hash: j.hash.clone(),
                dir: j.dir.clone(),
                model_seed: j.model.seed,
                resample_seed: j.resample_seed,
            })
            .collect(),
    };
    write_atomic(&out.join(RUN_MANIFEST_FILE), &to_json(&manifest))?;
    write_atomic(&out.join(RESULTS_FILE), &to_json(&results))?;
    let null = out.join(super::NULL_FILE);
    let null = if null.exists() { Some(read_json::<NullOutcome>(&null)?) } else { None };
    write_reports(out, &results, null.as_ref())?;
    Ok(RunSummary {
        results,
        trained,
        resumed,
    })
}

pub fn read_results(dir: &Path) -> Result<ResultsFile, ExperimentError> {
    let r: ResultsFile = read_json(&dir.join(RESULTS_FILE))?;
    if r.version != RESULTS_VERSION {
        return Err(ExperimentError::Format(format!(
            "results version {} is not supported (expected {RESULTS_VERSION})",
            r.version
        )));
    }
    Ok(r)
}

/// The text report: the accuracy table, failed attributes, and the macro
/// significance section when a null baseline exists.
pub fn render_report(results: &ResultsFile, null: Option<&NullOutcome>) -> String {
    let mut out = results.report().to_text();
    let failed: Vec<&AttributeResult> = results.attributes.iter().filter(|a| !a.ok).collect();
    if !failed.is_empty() {
        out.push_str("\nFailed attributes\n");
        for a in failed {
            out.push_str(&format!("  {}: {}\n", a.name, a.error.as_deref().unwrap_or("unknown error")));
        }
    }
    if let Some(n) = null {
        out.push('\n');
        out.push_str(&n.render());
    }
    out
}

pub fn write_reports(dir: &Path, results: &ResultsFile, null: Option<&NullOutcome>) -> Result<(), ExperimentError> {
    write_atomic(&dir.join("report.tsv"), results.report().to_tsv().as_bytes())?;
    write_atomic(&dir.join("report.txt"), render_report(results, null).as_bytes())
}

/// Test users of every fold of an attribute, from the job records.
pub(crate) fn fold_records(dir: &Path, attr: &AttributeResult) -> Result<Vec<(PathBuf, FoldRecord)>, ExperimentError> {
    attr.folds
        .iter()
        .map(|f| {
            let job = dir.join(&f.job);
            let rec = read_json::<FoldRecord>(&job.join(FOLD_FILE))?;
            Ok((job.join(CHECKPOINT_FILE), rec))
        })
        .collect()
}

pub(crate) fn featurize_users(
    source: &dyn RecordingSource,
    users: &[LabeledUser],
    seq_len: usize,
) -> Result<BTreeMap<String, FeatureMatrix>, ExperimentError> {
    let ids: BTreeSet<&str> = users.iter().flat_map(|u| u.recording_ids.iter().map(String::as_str)).collect();
    featurize_ids(source, ids, seq_len)
}
