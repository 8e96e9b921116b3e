use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{binomial_p, binomial_tail, StatsError};
use crate::classifier::{sequence_class, user_decision, ClassifierError, Model};
use crate::dataset::Label;
use crate::featurizer::FeatureMatrix;

/// One test user's sequences as fed to a model.
#[derive(Debug, Clone)]
pub struct TestUser<'a> {
    pub user_id: String,
    pub label: Label,
    pub sequences: Vec<&'a FeatureMatrix>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequencePrediction {
    pub user_id: String,
    pub label: Label,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserPrediction {
    pub user_id: String,
    pub label: Label,
    pub score: f64,
    pub predicted: Label,
}

/// Every test prediction of one fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub sequences: Vec<SequencePrediction>,
    pub users: Vec<UserPrediction>,
}

impl FoldResult {
    pub fn sequence_correct(&self) -> usize {
        self.sequences
            .iter()
            .filter(|s| sequence_class(s.probability) == s.label)
            .count()
    }

    pub fn user_correct(&self) -> usize {
        self.users.iter().filter(|u| u.predicted == u.label).count()
    }
}

/// Runs `model` over every test user's sequences.
pub fn predict_fold<T: crate::nn::Real>(model: &Model<T>, fold: usize, users: &[TestUser<'_>]) -> Result<FoldResult, ClassifierError> {
    let mut out = FoldResult {
        fold,
        sequences: Vec::new(),
        users: Vec::new(),
    };
    for u in users {
        let probs = u
            .sequences
            .iter()
            .map(|fm| model.predict_sequence(fm))
            .collect::<Result<Vec<_>, _>>()?;
        let (score, predicted) = user_decision(&probs)?;
        out.sequences.extend(probs.iter().map(|&p| SequencePrediction {
            user_id: u.user_id.clone(),
            label: u.label,
            probability: p,
        }));
        out.users.push(UserPrediction {
            user_id: u.user_id.clone(),
            label: u.label,
            score,
            predicted,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub fold: usize,
    pub sequence_correct: usize,
    pub sequence_total: usize,
    pub user_correct: usize,
    pub user_total: usize,
}

/// Pooled accuracy and exact significance at one granularity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pooled {
    /// All labeled, eligible units of the attribute.
    pub total: usize,
    /// Test units pooled across folds.
    pub test: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// `P(X ≥ correct)` under `Binomial(test, 1/2)`.
    pub p_value: f64,
    /// `log10` of the p-value, finite even when `p_value` underflows.
    pub log10_p: f64,
}

impl Pooled {
    fn new(total: usize, test: usize, correct: usize) -> Result<Self, StatsError> {
        if test == 0 {
            return Err(StatsError::DomainError("no test predictions".into()));
        }
        let tail = binomial_tail(test as u64, correct as u64, 0.5)?;
        Ok(Self {
            total,
            test,
            correct,
            accuracy: correct as f64 / test as f64,
            p_value: binomial_p(test as u64, correct as u64, 0.5)?,
            log10_p: tail.log10(),
        })
    }
}

/// One attribute's evaluation, pooled over folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub attribute: String,
    pub per_sequence: Pooled,
    pub per_user: Pooled,
    pub folds: Vec<FoldSummary>,
    /// False when some fold's test sequences are not split evenly between
    /// the classes (users always are). Per-sequence p-values then rest on
    /// an approximate chance level.
    pub sequences_balanced: bool,
}

/// Pools correct/total counts across folds and attaches binomial p-values.
/// Every fold must test as many class A users as class B users.
pub fn evaluate_attribute(
    attribute: &str,
    total_users: usize,
    total_sequences: usize,
    folds: &[FoldResult],
) -> Result<EvalRow, StatsError> {
    if folds.is_empty() {
        return Err(StatsError::NoFolds);
    }
    let count = |labels: &mut dyn Iterator<Item = Label>| {
        labels.fold((0, 0), |(a, b), l| if l == Label::A { (a + 1, b) } else { (a, b + 1) })
    };
    let mut summaries = Vec::with_capacity(folds.len());
    let mut sequences_balanced = true;
    for f in folds {
        let (a, b) = count(&mut f.users.iter().map(|u| u.label));
        if a != b {
            return Err(StatsError::UnbalancedTestSet { fold: f.fold, class_a: a, class_b: b });
        }
        let (sa, sb) = count(&mut f.sequences.iter().map(|s| s.label));
        sequences_balanced &= sa == sb;
        summaries.push(FoldSummary {
            fold: f.fold,
            sequence_correct: f.sequence_correct(),
            sequence_total: f.sequences.len(),
            user_correct: f.user_correct(),
            user_total: f.users.len(),
        });
    }
    let sum = |g: fn(&FoldSummary) -> usize| summaries.iter().map(g).sum::<usize>();
    Ok(EvalRow {
        attribute: attribute.to_string(),
        per_sequence: Pooled::new(total_sequences, sum(|s| s.sequence_total), sum(|s| s.sequence_correct))?,
        per_user: Pooled::new(total_users, sum(|s| s.user_total), sum(|s| s.user_correct))?,
        folds: summaries,
        sequences_balanced,
    })
}

/// Significance as printed in the report: `p < 0.001` or `p = 0.123`.
pub fn format_significance(p: f64) -> String {
    if p < 0.001 {
        "p < 0.001".into()
    } else {
        format!("p = {p:.3}")
    }
}

/// Column names of the delimited report, in order.
pub const REPORT_COLUMNS: [&str; 11] = [
    "Attribute",
    "Sequence Total #",
    "Sequence Test #",
    "Sequence Accuracy",
    "Sequence Significance",
    "User Total #",
    "User Test #",
    "User Accuracy",
    "User Significance",
    "sequence_p",
    "user_p",
];

/// Rows for every attribute, ordered as added.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    /// Rows sorted by per-user accuracy, highest first (ties by name).
    pub fn sorted(&self) -> Vec<&EvalRow> {
        let mut rows: Vec<&EvalRow> = self.rows.iter().collect();
        rows.sort_by(|a, b| {
            b.per_user
                .accuracy
                .total_cmp(&a.per_user.accuracy)
                .then_with(|| a.attribute.cmp(&b.attribute))
        });
        rows
    }

    /// Tab-separated table with [`REPORT_COLUMNS`].
    pub fn to_tsv(&self) -> String {
        let mut out = REPORT_COLUMNS.join("\t");
        out.push('\n');
        for r in self.sorted() {
            let (s, u) = (&r.per_sequence, &r.per_user);
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{:.1}%\t{}\t{}\t{}\t{:.1}%\t{}\t{:e}\t{:e}",
                r.attribute,
                s.total,
                s.test,
                100.0 * s.accuracy,
                format_significance(s.p_value),
                u.total,
                u.test,
                100.0 * u.accuracy,
                format_significance(u.p_value),
                s.p_value,
                u.p_value
            );
        }
        out
    }

    /// Aligned plain-text rendering of the same table.
    pub fn to_text(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .sorted()
            .into_iter()
            .map(|r| {
                let (s, u) = (&r.per_sequence, &r.per_user);
                vec![
                    r.attribute.clone(),
                    s.total.to_string(),
                    s.test.to_string(),
                    format!("{:.1}%", 100.0 * s.accuracy),
                    format_significance(s.p_value),
                    u.total.to_string(),
                    u.test.to_string(),
                    format!("{:.1}%", 100.0 * u.accuracy),
                    format_significance(u.p_value),
                ]
            })
            .collect();
        let header = ["Attribute", "Total #", "Test #", "Accuracy", "Significance", "Total #", "Test #", "Accuracy", "Significance"];
        let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
        for r in &rows {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.chars().count());
            }
        }
        let seq_w: usize = widths[1..5].iter().sum::<usize>() + 9;
        let user_w: usize = widths[5..9].iter().sum::<usize>() + 9;
        let mut out = format!(
            "{:w0$} | {:^seq_w$} | {:^user_w$}\n",
            "",
            "Per Sequence",
            "Per User",
            w0 = widths[0]
        );
        let line = |cells: &[String]| {
            let mut s = String::new();
            for (i, (c, w)) in cells.iter().zip(&widths).enumerate() {
                let pad = w - c.chars().count();
                if i == 0 {
                    s.push_str(c);
                    s.push_str(&" ".repeat(pad));
                } else {
                    s.push_str(if i == 1 || i == 5 { " | " } else { "  " });
                    s.push_str(&" ".repeat(pad));
                    s.push_str(c);
                }
            }
            s.push('\n');
            s
        };
        out.push_str(&line(&header.map(String::from)));
        for r in &rows {
            out.push_str(&line(r));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fold(fold: usize, users: &[(Label, bool)]) -> FoldResult {
        let mut f = FoldResult { fold, sequences: vec![], users: vec![] };
        for (i, &(label, right)) in users.iter().enumerate() {
            let predicted = if right { label } else if label == Label::A { Label::B } else { Label::A };
            let probability = if predicted == Label::B { 0.8 } else { 0.2 };
            f.sequences.push(SequencePrediction { user_id: format!("u{i}"), label, probability });
            f.users.push(UserPrediction { user_id: format!("u{i}"), label, score: probability, predicted });
        }
        f
    }

    fn balanced(n: usize, wrong: usize) -> Vec<(Label, bool)> {
        (0..n).map(|i| (if i % 2 == 0 { Label::A } else { Label::B }, i >= wrong)).collect()
    }

    #[test]
    fn standalone_grip_shape() {
        let folds = [fold(0, &balanced(20, 2)), fold(1, &balanced(20, 2)), fold(2, &balanced(20, 1))];
        let row = evaluate_attribute("StandaloneGrip", 311, 311, &folds).unwrap();
        assert_eq!((row.per_user.test, row.per_user.correct), (60, 55));
        assert!((row.per_user.accuracy - 0.9166).abs() < 1e-3);
        assert!(row.per_user.p_value < 0.001);
        assert_eq!(format_significance(row.per_user.p_value), "p < 0.001");
    }

    #[test]
    fn perfect_and_half() {
        let row = evaluate_attribute("X", 20, 20, &[fold(0, &balanced(20, 0))]).unwrap();
        assert_eq!(row.per_user.p_value, 0.5f64.powi(20));
        let row = evaluate_attribute("X", 20, 20, &[fold(0, &balanced(20, 10))]).unwrap();
        assert_eq!(row.per_user.accuracy, 0.5);
        assert!(row.per_user.p_value > 0.5);
    }

    #[test]
    fn unbalanced_users_rejected() {
        let f = fold(0, &[(Label::A, true), (Label::A, true), (Label::B, true)]);
        assert!(matches!(
            evaluate_attribute("X", 3, 3, &[f]),
            Err(StatsError::UnbalancedTestSet { class_a: 2, class_b: 1, .. })
        ));
        assert!(matches!(evaluate_attribute("X", 0, 0, &[]), Err(StatsError::NoFolds)));
    }

    #[test]
    fn report_columns() {
        let row = evaluate_attribute("X", 20, 2000, &[fold(0, &balanced(20, 3))]).unwrap();
        let report = EvalReport { rows: vec![row] };
        let tsv = report.to_tsv();
        let mut lines = tsv.lines();
        assert_eq!(lines.next().unwrap().split('\t').collect::<Vec<_>>(), REPORT_COLUMNS);
        let cells: Vec<&str> = lines.next().unwrap().split('\t').collect();
        assert_eq!(&cells[..9], ["X", "2000", "20", "85.0%", "p = 0.001", "20", "20", "85.0%", "p = 0.001"]);
        assert!(report.to_text().contains("Per Sequence"));
    }
}
