use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{FoldResult, TestUser};
use crate::classifier::{ClassifierError, Model};
use crate::featurizer::FeatureMatrix;
use crate::nn::Real;
use crate::rng::child_rng;

/// Per-channel `[min, max]` over the valid rows of every test sequence.
pub fn channel_ranges(users: &[TestUser<'_>]) -> Vec<(f32, f32)> {
    let mut ranges: Vec<(f32, f32)> = Vec::new();
    for fm in users.iter().flat_map(|u| &u.sequences) {
        if ranges.is_empty() {
            ranges = vec![(f32::INFINITY, f32::NEG_INFINITY); fm.cols()];
        }
        for r in 0..fm.valid_rows() {
            for (c, v) in fm.row(r).iter().enumerate() {
                ranges[c].0 = ranges[c].0.min(*v);
                ranges[c].1 = ranges[c].1.max(*v);
            }
        }
    }
    for r in &mut ranges {
        if r.0 > r.1 {
            *r = (0.0, 0.0);
        }
    }
    ranges
}

/// A random matrix shaped like `like`: each valid row's channels uniform
/// over `ranges`, padding left at zero.
pub fn fictitious_matrix<R: Rng>(like: &FeatureMatrix, ranges: &[(f32, f32)], rng: &mut R) -> FeatureMatrix {
    let cols = like.cols();
    let mut values = vec![0f32; like.rows() * cols];
    for r in 0..like.valid_rows() {
        for (c, &(lo, hi)) in ranges.iter().enumerate().take(cols) {
            values[r * cols + c] = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
        }
    }
    FeatureMatrix::from_rows(like.rows(), values, like.valid_rows())
}

/// Replaces every test sequence with seeded random input of the same shape
/// and predicts with the trained model, keeping each slot's true label.
pub fn fictitious_fold<T: Real>(
    model: &Model<T>,
    fold: usize,
    users: &[TestUser<'_>],
    ranges: &[(f32, f32)],
    seed: u64,
) -> Result<FoldResult, ClassifierError> {
    let owned: Vec<Vec<FeatureMatrix>> = users
        .iter()
        .map(|u| {
            let mut rng = child_rng(seed, &format!("null-{fold}-{}", u.user_id));
            u.sequences.iter().map(|fm| fictitious_matrix(fm, ranges, &mut rng)).collect()
        })
        .collect();
    let fake: Vec<TestUser<'_>> = users
        .iter()
        .zip(&owned)
        .map(|(u, seqs)| TestUser {
            user_id: u.user_id.clone(),
            label: u.label,
            sequences: seqs.iter().collect(),
        })
        .collect();
    super::predict_fold(model, fold, &fake)
}

/// Real and fictitious-input accuracies, paired by attribute.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PairedSample {
    pub attributes: Vec<String>,
    pub real: Vec<f64>,
    pub fictitious: Vec<f64>,
}

impl PairedSample {
    pub fn push(&mut self, attribute: &str, real: f64, fictitious: f64) {
        self.attributes.push(attribute.to_string());
        self.real.push(real);
        self.fictitious.push(fictitious);
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    /// The pairs whose attribute satisfies `keep`, order preserved.
    pub fn filter(&self, keep: impl Fn(&str) -> bool) -> Self {
        let mut out = Self::default();
        for i in 0..self.len() {
            if keep(&self.attributes[i]) {
                out.push(&self.attributes[i], self.real[i], self.fictitious[i]);
            }
        }
        out
    }

    pub fn extend(&mut self, other: &Self) {
        for i in 0..other.len() {
            self.push(&other.attributes[i], other.real[i], other.fictitious[i]);
        }
    }
}
