//! Exact significance tests, per-attribute evaluation, the fictitious-input
//! baseline and attribute correlations.

mod binomial;
mod correlation;
mod evaluate;
mod null;
mod wilcoxon;

use thiserror::Error;

pub use binomial::{binomial_p, binomial_tail, ExtFloat};
pub use correlation::{pairwise_r2, R2Matrix};
pub use evaluate::{
    evaluate_attribute, format_significance, predict_fold, EvalReport, EvalRow, FoldResult, FoldSummary, Pooled,
    SequencePrediction, TestUser, UserPrediction, REPORT_COLUMNS,
};
pub use null::{channel_ranges, fictitious_fold, fictitious_matrix, PairedSample};
pub use wilcoxon::{
    exact_null_distribution, signed_ranks, wilcoxon_exact, wilcoxon_normal, wilcoxon_signed_rank, WilcoxonMethod,
    WilcoxonResult, EXACT_MAX_PAIRS, MIN_PAIRS,
};

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("outside the domain: {0}")]
    DomainError(String),
    #[error("{have} non-zero differences; at least {need} required")]
    TooFewPairs { have: usize, need: usize },
    #[error("every paired difference is zero")]
    AllZeroDifferences,
    #[error("paired samples differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("fold {fold} tests {class_a} class A users and {class_b} class B users")]
    UnbalancedTestSet { fold: usize, class_a: usize, class_b: usize },
    #[error("no folds to evaluate")]
    NoFolds,
}
