//! Two-sided Wilcoxon signed-rank test on paired samples.

use serde::{Deserialize, Serialize};

use super::StatsError;

/// Largest number of non-zero differences handled by the exact null
/// distribution.
pub const EXACT_MAX_PAIRS: usize = 20;
/// Fewer non-zero differences than this are rejected.
pub const MIN_PAIRS: usize = 5;
/// Absolute differences closer than this share a rank.
const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WilcoxonMethod {
    Exact,
    Normal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Non-zero differences used.
    pub pairs: usize,
    /// Sum of ranks of positive differences (`x - y > 0`).
    pub w_plus: f64,
    pub w_minus: f64,
    pub p_value: f64,
    pub method: WilcoxonMethod,
}

/// Average ranks (1-based) of `|d|`, ties sharing their mean rank.
pub fn signed_ranks(diffs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..diffs.len()).collect();
    order.sort_by(|&a, &b| diffs[a].abs().total_cmp(&diffs[b].abs()));
    let mut ranks = vec![0.0; diffs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        let base = diffs[order[i]].abs();
        while j < order.len() && diffs[order[j]].abs() - base <= TIE_TOLERANCE * base.max(1.0) {
            j += 1;
        }
        let avg = (i + 1 + j) as f64 / 2.0;
        for &o in &order[i..j] {
            ranks[o] = avg;
        }
        i = j;
    }
    ranks
}

/// Probability of each value of `2·W+` when every sign is equally likely.
/// Index `s` holds `P(2·W+ = s)`; ranks must be multiples of 1/2.
pub fn exact_null_distribution(ranks: &[f64]) -> Vec<f64> {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0f64; total + 1];
    counts[0] = 1.0;
    let mut reach = 0;
    for &r in &doubled {
        for s in (0..=reach).rev() {
            if counts[s] != 0.0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let scale = 0.5f64.powi(ranks.len() as i32);
    counts.iter().map(|c| c * scale).collect()
}

/// Differences `x[i] - y[i]` with zeros dropped.
fn nonzero_diffs(x: &[f64], y: &[f64]) -> Result<Vec<f64>, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).filter(|d| *d != 0.0).collect();
    if d.is_empty() {
        return Err(StatsError::AllZeroDifferences);
    }
    if d.len() < MIN_PAIRS {
        return Err(StatsError::TooFewPairs { have: d.len(), need: MIN_PAIRS });
    }
    Ok(d)
}

fn rank_sums(d: &[f64], ranks: &[f64]) -> (f64, f64) {
    let plus = d.iter().zip(ranks).filter(|(d, _)| **d > 0.0).fold(0.0, |a, (_, r)| a + r);
    let minus = d.iter().zip(ranks).filter(|(d, _)| **d < 0.0).fold(0.0, |a, (_, r)| a + r);
    (plus, minus)
}

/// Exact two-sided p-value, `min(1, 2·min(P(W+ ≤ w), P(W+ ≥ w)))`.
pub fn wilcoxon_exact(x: &[f64], y: &[f64]) -> Result<WilcoxonResult, StatsError> {
    let d = nonzero_diffs(x, y)?;
    if d.len() > EXACT_MAX_PAIRS {
        return Err(StatsError::DomainError(format!(
            "exact Wilcoxon supports at most {EXACT_MAX_PAIRS} pairs, got {}",
            d.len()
        )));
    }
    let ranks = signed_ranks(&d);
    let (w_plus, w_minus) = rank_sums(&d, &ranks);
    let dist = exact_null_distribution(&ranks);
    let w = (2.0 * w_plus).round() as usize;
    let lower: f64 = dist[..=w].iter().sum();
    let upper: f64 = dist[w..].iter().sum();
    Ok(WilcoxonResult {
        pairs: d.len(),
        w_plus,
        w_minus,
        p_value: (2.0 * lower.min(upper)).min(1.0),
        method: WilcoxonMethod::Exact,
    })
}

/// Normal approximation with tie-corrected variance and a continuity
/// correction of 1/2.
pub fn wilcoxon_normal(x: &[f64], y: &[f64]) -> Result<WilcoxonResult, StatsError> {
    let d = nonzero_diffs(x, y)?;
    let ranks = signed_ranks(&d);
    let (w_plus, w_minus) = rank_sums(&d, &ranks);
    let m = d.len() as f64;
    let mean = m * (m + 1.0) / 4.0;
    let mut tie_term = 0.0;
    let mut sorted = ranks.clone();
    sorted.sort_by(f64::total_cmp);
    for group in sorted.chunk_by(|a, b| a == b) {
        let t = group.len() as f64;
        tie_term += t * t * t - t;
    }
    let var = m * (m + 1.0) * (2.0 * m + 1.0) / 24.0 - tie_term / 48.0;
    let z = ((w_plus - mean).abs() - 0.5).max(0.0) / var.sqrt();
    let p = libm::erfc(z / std::f64::consts::SQRT_2).min(1.0);
    Ok(WilcoxonResult {
        pairs: d.len(),
        w_plus,
        w_minus,
        p_value: p,
        method: WilcoxonMethod::Normal,
    })
}

/// Exact up to [`EXACT_MAX_PAIRS`] non-zero differences, normal beyond.
pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64]) -> Result<WilcoxonResult, StatsError> {
    let m = nonzero_diffs(x, y)?.len();
    if m <= EXACT_MAX_PAIRS {
        wilcoxon_exact(x, y)
    } else {
        wilcoxon_normal(x, y)
    }
}
