//! Clustering evaluation: accuracy under optimal cluster-to-class matching,
//! normalized mutual information, adjusted Rand index.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hungarian::min_cost_assignment;
use crate::mat::Mat;

/// Joint counts of (predicted cluster, true class) pairs.
#[derive(Debug, Clone)]
pub struct ContingencyTable {
    /// counts[p][t], flattened row-major: k_pred rows, k_true cols.
    pub counts: Vec<u64>,
    pub k_pred: usize,
    pub k_true: usize,
    pub row_sums: Vec<u64>,
    pub col_sums: Vec<u64>,
    pub n: u64,
}

impl ContingencyTable {
    pub fn from_labels(pred: &[usize], truth: &[usize]) -> Result<Self> {
        if pred.is_empty() {
            return Err(Error::invalid("pred", "empty input"));
        }
        if pred.len() != truth.len() {
            return Err(Error::DimMismatch(format!(
                "{} predictions vs {} labels",
                pred.len(),
                truth.len()
            )));
        }
        let k_pred = pred.iter().max().unwrap() + 1;
        let k_true = truth.iter().max().unwrap() + 1;
        let mut counts = vec![0u64; k_pred * k_true];
        for (&p, &t) in pred.iter().zip(truth) {
            counts[p * k_true + t] += 1;
        }
        let row_sums: Vec<u64> = (0..k_pred)
            .map(|p| counts[p * k_true..(p + 1) * k_true].iter().sum())
            .collect();
        let col_sums: Vec<u64> = (0..k_true)
            .map(|t| (0..k_pred).map(|p| counts[p * k_true + t]).sum())
            .collect();
        Ok(ContingencyTable {
            counts,
            k_pred,
            k_true,
            row_sums,
            col_sums,
            n: pred.len() as u64,
        })
    }

    pub fn count(&self, p: usize, t: usize) -> u64 {
        self.counts[p * self.k_true + t]
    }
}

/// Clustering accuracy: the best matched fraction over cluster-to-class
/// bijections, found by Hungarian assignment on the negated contingency
/// table (padded square when cluster and class counts differ).
pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = ContingencyTable::from_labels(pred, truth)?;
    let side = table.k_pred.max(table.k_true);
    let max_count = table.n as f64;
    let mut costs = Mat::zeros(side, side);
    for p in 0..side {
        for t in 0..side {
            let c = if p < table.k_pred && t < table.k_true {
                table.count(p, t) as f64
            } else {
                0.0
            };
            costs[(p, t)] = max_count - c;
        }
    }
    let assignment = min_cost_assignment(&costs);
    let matched: u64 = assignment
        .iter()
        .enumerate()
        .filter(|&(p, &t)| p < table.k_pred && t < table.k_true)
        .map(|(p, &t)| table.count(p, t))
        .sum();
    Ok(matched as f64 / table.n as f64)
}

/// Normalized mutual information, normalized by the geometric mean of the
/// marginal entropies. Identical partitions give 1.0; if either entropy is
/// zero while the partitions differ, the score is 0; if both entropies are
/// zero the partitions are constant and equal, giving 1.0.
pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = ContingencyTable::from_labels(pred, truth)?;
    let n = table.n as f64;
    let entropy = |sums: &[u64]| -> f64 {
        sums.iter()
            .filter(|&&s| s > 0)
            .map(|&s| {
                let p = s as f64 / n;
                -p * p.ln()
            })
            .sum()
    };
    let h_pred = entropy(&table.row_sums);
    let h_true = entropy(&table.col_sums);
    if h_pred == 0.0 && h_true == 0.0 {
        return Ok(1.0);
    }
    if h_pred == 0.0 || h_true == 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for p in 0..table.k_pred {
        for t in 0..table.k_true {
            let c = table.count(p, t);
            if c == 0 {
                continue;
            }
            let joint = c as f64 / n;
            let marg = (table.row_sums[p] as f64 / n) * (table.col_sums[t] as f64 / n);
            mi += joint * (joint / marg).ln();
        }
    }
    Ok((mi / (h_pred * h_true).sqrt()).clamp(0.0, 1.0))
}

/// Adjusted Rand index: `(Index - Expected) / (Max - Expected)` over pair
/// counts. Degenerate instances with `Max == Expected` score 1.0 when the
/// partitions agree perfectly and 0.0 otherwise.
pub fn ari(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = ContingencyTable::from_labels(pred, truth)?;
    let choose2 = |x: u64| -> f64 { (x as f64) * (x as f64 - 1.0) / 2.0 };
    let index: f64 = table.counts.iter().map(|&c| choose2(c)).sum();
    let sum_rows: f64 = table.row_sums.iter().map(|&c| choose2(c)).sum();
    let sum_cols: f64 = table.col_sums.iter().map(|&c| choose2(c)).sum();
    let total_pairs = choose2(table.n);
    let expected = sum_rows * sum_cols / total_pairs.max(1.0);
    let max = 0.5 * (sum_rows + sum_cols);
    if (max - expected).abs() < 1e-12 {
        return Ok(if (index - max).abs() < 1e-12 { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / (max - expected))
}

/// The three scores together, as reported by runs and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub acc: f64,
    pub nmi: f64,
    pub ari: f64,
}

pub fn evaluate(pred: &[usize], truth: &[usize]) -> Result<MetricsReport> {
    Ok(MetricsReport {
        acc: accuracy(pred, truth)?,
        nmi: nmi(pred, truth)?,
        ari: ari(pred, truth)?,
    })
}
