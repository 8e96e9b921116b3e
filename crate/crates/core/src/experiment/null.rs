use std::path::Path;

use serde::{Deserialize, Serialize};

use super::runner::{featurize_users, fold_records, read_json, test_users};
use super::{read_results, write_atomic, write_reports, ExperimentError, RunManifest, RUN_MANIFEST_FILE};
use crate::classifier::load_checkpoint_for;
use crate::rng::derive_seed;
use crate::stats::{channel_ranges, fictitious_fold, format_significance, wilcoxon_signed_rank, PairedSample, WilcoxonResult};

pub const NULL_FILE: &str = "null.json";

/// Pooled accuracies of one attribute on real and on fictitious test input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullRow {
    pub attribute: String,
    pub real_sequence_accuracy: f64,
    pub null_sequence_accuracy: f64,
    pub real_user_accuracy: f64,
    pub null_user_accuracy: f64,
}

/// A Wilcoxon outcome, or why the test could not run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonSummary {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<WilcoxonResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl WilcoxonSummary {
    pub fn of(sample: &PairedSample) -> Self {
        match wilcoxon_signed_rank(&sample.real, &sample.fictitious) {
            Ok(r) => WilcoxonSummary {
                result: Some(r),
                error: None,
            },
            Err(e) => WilcoxonSummary {
                result: None,
                error: Some(e.to_string()),
            },
        }
    }

    pub fn p_value(&self) -> Option<f64> {
        self.result.as_ref().map(|r| r.p_value)
    }

    fn describe(&self) -> String {
        match (&self.result, &self.error) {
            (Some(r), _) => format!("{} (pairs {}, W+ {}, W- {})", format_significance(r.p_value), r.pairs, r.w_plus, r.w_minus),
            (None, Some(e)) => format!("not computed: {e}"),
            (None, None) => "not computed".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullOutcome {
    pub seed: u64,
    pub rows: Vec<NullRow>,
    pub per_sequence: PairedSample,
    pub per_user: PairedSample,
    pub wilcoxon_sequence: WilcoxonSummary,
    pub wilcoxon_user: WilcoxonSummary,
}

impl NullOutcome {
    pub fn from_rows(seed: u64, rows: Vec<NullRow>) -> Self {
        let mut per_sequence = PairedSample::default();
        let mut per_user = PairedSample::default();
        for r in &rows {
            per_sequence.push(&r.attribute, r.real_sequence_accuracy, r.null_sequence_accuracy);
            per_user.push(&r.attribute, r.real_user_accuracy, r.null_user_accuracy);
        }
        NullOutcome {
            seed,
            wilcoxon_sequence: WilcoxonSummary::of(&per_sequence),
            wilcoxon_user: WilcoxonSummary::of(&per_user),
            rows,
            per_sequence,
            per_user,
        }
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::from("attribute\treal_sequence_accuracy\tnull_sequence_accuracy\treal_user_accuracy\tnull_user_accuracy\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                r.attribute, r.real_sequence_accuracy, r.null_sequence_accuracy, r.real_user_accuracy, r.null_user_accuracy
            ));
        }
        s
    }

    /// The macro-significance section of the text report.
    pub fn render(&self) -> String {
        let mut s = String::from("Macro significance (real vs fictitious input, Wilcoxon signed-rank, two-sided)\n");
        let w = self.rows.iter().map(|r| r.attribute.len()).max().unwrap_or(0).max(9);
        s.push_str(&format!("  {:w$}  {:>8}  {:>8}  {:>8}  {:>8}\n", "attribute", "seq", "seq-null", "user", "user-null"));
        for r in &self.rows {
            s.push_str(&format!(
                "  {:w$}  {:>8.4}  {:>8.4}  {:>8.4}  {:>8.4}\n",
                r.attribute, r.real_sequence_accuracy, r.null_sequence_accuracy, r.real_user_accuracy, r.null_user_accuracy
            ));
        }
        s.push_str(&format!("  per-sequence pairing: {}\n", self.wilcoxon_sequence.describe()));
        s.push_str(&format!("  per-user pairing: {}\n", self.wilcoxon_user.describe()));
        s
    }
}

/// Re-evaluates every trained fold model of a finished run on fictitious
/// input, pairs the accuracies by attribute and runs the Wilcoxon test.
/// Writes `null.json`, `null.tsv` and refreshes the reports.
pub fn null_baseline(dir: &Path, seed: u64) -> Result<NullOutcome, ExperimentError> {
    let results = read_results(dir)?;
    let run: RunManifest = read_json(&dir.join(RUN_MANIFEST_FILE))?;
    let mut rows = Vec::new();
    let mut dataset = None;
    for attr in results.attributes.iter().filter(|a| a.ok) {
        let Some(row) = &attr.row else { continue };
        let records = fold_records(dir, attr)?;
        if let Some((ckpt, _)) = records.iter().find(|(c, _)| !c.exists()) {
            return Err(ExperimentError::MissingCheckpoints(ckpt.display().to_string()));
        }
        if dataset.is_none() {
            dataset = Some(super::load_dataset(&run.experiment)?);
        }
        let source = dataset.as_ref().expect("loaded").source.as_ref();
        let (mut seq_ok, mut seq_n, mut user_ok, mut user_n) = (0, 0, 0, 0);
        for (ckpt, rec) in &records {
            let trained = load_checkpoint_for(ckpt, &rec.model)?;
            let features = featurize_users(source, &rec.test_users, rec.model.seq_len)?;
            let users = test_users(&rec.test_users, &features);
            let ranges = channel_ranges(&users);
            let fold_seed = derive_seed(seed, &format!("null-{}-{}", attr.name, rec.fold));
            let fake = fictitious_fold(&trained.model, rec.fold, &users, &ranges, fold_seed)?;
            seq_ok += fake.sequence_correct();
            seq_n += fake.sequences.len();
            user_ok += fake.user_correct();
            user_n += fake.users.len();
        }
        rows.push(NullRow {
            attribute: attr.name.clone(),
            real_sequence_accuracy: row.per_sequence.accuracy,
            null_sequence_accuracy: seq_ok as f64 / seq_n.max(1) as f64,
            real_user_accuracy: row.per_user.accuracy,
            null_user_accuracy: user_ok as f64 / user_n.max(1) as f64,
        });
    }
    let outcome = NullOutcome::from_rows(seed, rows);
    let mut json = serde_json::to_string_pretty(&outcome).expect("serializes");
    json.push('\n');
    write_atomic(&dir.join(NULL_FILE), json.as_bytes())?;
    write_atomic(&dir.join("null.tsv"), outcome.to_tsv().as_bytes())?;
    write_reports(dir, &results, Some(&outcome))?;
    Ok(outcome)
}
