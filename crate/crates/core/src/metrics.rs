//! Clustering and reconstruction error.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SssaError};
use crate::spectral::Labeling;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionError {
    /// `‖X̂ − X‖_F / ‖X‖_F` over all entries.
    pub full: f64,
    /// Same ratio restricted to the unobserved entries (0 when none).
    pub missing_only: f64,
}

/// Relative Frobenius error, on the full matrix and on the unobserved block.
pub fn reconstruction_error(
    x_hat: &DMatrix<f64>,
    x_true: &DMatrix<f64>,
    mask: Option<&DMatrix<bool>>,
) -> Result<ReconstructionError> {
    if x_hat.shape() != x_true.shape() {
        return Err(SssaError::Shape {
            expected: x_true.shape(),
            got: x_hat.shape(),
        });
    }
    let norm = x_true.norm();
    if norm == 0.0 {
        return Err(SssaError::ZeroNormTruth);
    }
    let full = (x_hat - x_true).norm() / norm;
    let missing_only = match mask {
        Some(mask) => {
            let (mut num, mut den) = (0.0, 0.0);
            for ((h, t), &m) in x_hat.iter().zip(x_true.iter()).zip(mask.iter()) {
                if !m {
                    num += (h - t) * (h - t);
                    den += t * t;
                }
            }
            if den > 0.0 {
                (num / den).sqrt()
            } else {
                0.0
            }
        }
        None => full,
    };
    Ok(ReconstructionError { full, missing_only })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap {
    /// `map[p]` is the true cluster matched to predicted cluster `p`, if any.
    pub map: Vec<Option<usize>>,
    /// Points whose predicted cluster maps onto their true cluster.
    pub agreement: usize,
}

/// Cluster-id matching that maximizes agreement, by optimal assignment on
/// the confusion matrix.
pub fn best_label_map(pred: &Labeling, truth: &Labeling) -> Result<LabelMap> {
    if pred.len() != truth.len() {
        return Err(SssaError::LabelLength(pred.len(), truth.len()));
    }
    let size = pred.k.max(truth.k);
    let mut confusion = vec![vec![0i64; size]; size];
    for (&p, &t) in pred.labels.iter().zip(&truth.labels) {
        confusion[p][t] += 1;
    }
    let max = confusion.iter().flatten().copied().max().unwrap_or(0);
    let cost: Vec<Vec<i64>> = confusion
        .iter()
        .map(|row| row.iter().map(|&c| max - c).collect())
        .collect();
    let assignment = hungarian(&cost);
    let agreement = assignment
        .iter()
        .enumerate()
        .map(|(p, &t)| confusion[p][t] as usize)
        .sum();
    let map = (0..pred.k)
        .map(|p| Some(assignment[p]).filter(|&t| t < truth.k))
        .collect();
    Ok(LabelMap { map, agreement })
}

/// Fraction of points misclassified under the best cluster-id matching.
pub fn clustering_error(pred: &Labeling, truth: &Labeling) -> Result<f64> {
    let map = best_label_map(pred, truth)?;
    if pred.is_empty() {
        return Ok(0.0);
    }
    Ok(1.0 - map.agreement as f64 / pred.len() as f64)
}

/// Minimum-cost perfect assignment on a square integer cost matrix
/// (shortest augmenting path with potentials). Returns `row -> column`.
pub fn hungarian(cost: &[Vec<i64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    // 1-based internally; column 0 is the virtual start
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut col0 = 0;
        let mut minv = vec![i64::MAX; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r = owner[col0];
            let mut delta = i64::MAX;
            let mut col1 = 0;
            for col in 1..=n {
                if !used[col] {
                    let cur = cost[r - 1][col - 1] - u[r] - v[col];
                    if cur < minv[col] {
                        minv[col] = cur;
                        way[col] = col0;
                    }
                    if minv[col] < delta {
                        delta = minv[col];
                        col1 = col;
                    }
                }
            }
            for col in 0..=n {
                if used[col] {
                    u[owner[col]] += delta;
                    v[col] -= delta;
                } else {
                    minv[col] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col0];
            owner[col0] = owner[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for col in 1..=n {
        assignment[owner[col] - 1] = col - 1;
    }
    assignment
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub e_c: Option<f64>,
    pub e_r: Option<f64>,
    pub e_r_missing_only: Option<f64>,
    pub best_map: Option<Vec<Option<usize>>>,
}

/// Computes whichever metrics the available ground truth allows.
pub fn evaluate(
    x_hat: &DMatrix<f64>,
    mask: &DMatrix<bool>,
    labels: &Labeling,
    x_true: Option<&DMatrix<f64>>,
    labels_true: Option<&Labeling>,
) -> Result<MetricsReport> {
    let mut report = MetricsReport {
        e_c: None,
        e_r: None,
        e_r_missing_only: None,
        best_map: None,
    };
    if let Some(t) = labels_true {
        let map = best_label_map(labels, t)?;
        report.e_c = Some(clustering_error(labels, t)?);
        report.best_map = Some(map.map);
    }
    if let Some(t) = x_true {
        let r = reconstruction_error(x_hat, t, Some(mask))?;
        report.e_r = Some(r.full);
        report.e_r_missing_only = Some(r.missing_only);
    }
    Ok(report)
}
