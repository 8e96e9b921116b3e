use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::Label;

/// Squared Pearson correlations between binary attribute labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct R2Matrix {
    pub attributes: Vec<String>,
    /// `None` where either column has zero variance over the shared users.
    pub values: Vec<Vec<Option<f64>>>,
    /// Users labeled for both attributes.
    pub counts: Vec<Vec<usize>>,
}

fn r2(pairs: &[(f64, f64)]) -> Option<f64> {
    let n = pairs.len() as f64;
    if pairs.len() < 2 {
        return None;
    }
    let (mx, my) = pairs.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (mx / n, my / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in pairs {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy * sxy / (sxx * syy))
}

/// Pairwise R² over users labeled for both attributes (A = 0, B = 1).
/// The diagonal is 1.
pub fn pairwise_r2(labels: &BTreeMap<String, BTreeMap<String, Label>>) -> R2Matrix {
    let attributes: Vec<String> = labels.keys().cloned().collect();
    let cols: Vec<&BTreeMap<String, Label>> = labels.values().collect();
    let k = attributes.len();
    let mut values = vec![vec![None; k]; k];
    let mut counts = vec![vec![0; k]; k];
    for i in 0..k {
        values[i][i] = Some(1.0);
        counts[i][i] = cols[i].len();
        for j in i + 1..k {
            let pairs: Vec<(f64, f64)> = cols[i]
                .iter()
                .filter_map(|(u, a)| cols[j].get(u).map(|b| (a.target::<f64>(), b.target::<f64>())))
                .collect();
            let v = r2(&pairs);
            values[i][j] = v;
            values[j][i] = v;
            counts[i][j] = pairs.len();
            counts[j][i] = pairs.len();
        }
    }
    R2Matrix {
        attributes,
        values,
        counts,
    }
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

impl R2Matrix {
    /// Square tab-separated matrix with a header row.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("attribute");
        for a in &self.attributes {
            out.push('\t');
            out.push_str(a);
        }
        out.push('\n');
        for (a, row) in self.attributes.iter().zip(&self.values) {
            out.push_str(a);
            for v in row {
                out.push('\t');
                out.push_str(&cell(*v));
            }
            out.push('\n');
        }
        out
    }

    /// One row per ordered pair: `attribute_a, attribute_b, n, r2`.
    pub fn to_long_tsv(&self) -> String {
        let mut out = String::from("attribute_a\tattribute_b\tn\tr2\n");
        for (i, a) in self.attributes.iter().enumerate() {
            for (j, b) in self.attributes.iter().enumerate() {
                let _ = writeln!(out, "{a}\t{b}\t{}\t{}", self.counts[i][j], cell(self.values[i][j]));
            }
        }
        out
    }

    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.attributes.iter().position(|x| x == a)?;
        let j = self.attributes.iter().position(|x| x == b)?;
        self.values[i][j]
    }

    /// Off-diagonal pairs that could not be computed.
    pub fn degenerate_pairs(&self) -> Vec<(&str, &str)> {
        let mut out = Vec::new();
        for i in 0..self.attributes.len() {
            for j in i + 1..self.attributes.len() {
                if self.values[i][j].is_none() {
                    out.push((self.attributes[i].as_str(), self.attributes[j].as_str()));
                }
            }
        }
        out
    }
}
