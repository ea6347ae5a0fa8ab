//! Class transition tracking: instance-level prediction changes on unlabeled
//! data accumulate into a transition matrix whose batch average, min-max
//! normalized, acts as a similarity over instance-level classes. k-medoids on
//! that similarity yields the instance-to-cluster label map, kept stable
//! across refreshes by Hungarian index alignment.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::hungarian::min_cost_assignment;
use crate::kmedoids::pam;
use crate::mat::Mat;

/// Last instance-level prediction seen per dataset index.
#[derive(Debug, Clone, Default)]
pub struct PredictionLedger {
    last: HashMap<usize, usize>,
}

impl PredictionLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.last.len()
    }

    pub fn is_empty(&self) -> bool {
        self.last.is_empty()
    }
}

/// Ring buffer of per-batch transition count matrices, capacity `N_b`.
#[derive(Debug, Clone)]
pub struct TransitionMatrix {
    n_classes: usize,
    capacity: usize,
    batches: std::collections::VecDeque<Mat>,
    batches_tracked: u64,
}

impl TransitionMatrix {
    pub fn new(n_classes: usize, capacity: usize) -> Self {
        assert!(capacity >= 1, "need capacity >= 1");
        TransitionMatrix {
            n_classes,
            capacity,
            batches: std::collections::VecDeque::with_capacity(capacity),
            batches_tracked: 0,
        }
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    /// Total batches ever pushed (stored count is capped at capacity).
    pub fn batches_tracked(&self) -> u64 {
        self.batches_tracked
    }

    pub fn push(&mut self, batch: Mat) {
        assert_eq!(batch.rows(), self.n_classes);
        assert_eq!(batch.cols(), self.n_classes);
        if self.batches.len() == self.capacity {
            self.batches.pop_front();
        }
        self.batches.push_back(batch);
        self.batches_tracked += 1;
    }

    /// Elementwise mean over the stored (most recent) batch matrices.
    pub fn average(&self) -> Result<Mat> {
        if self.batches.is_empty() {
            return Err(Error::invalid("transitions", "no batches tracked yet"));
        }
        let mut avg = Mat::zeros(self.n_classes, self.n_classes);
        let inv = 1.0 / self.batches.len() as f64;
        for batch in &self.batches {
            for (a, b) in avg.as_mut_slice().iter_mut().zip(batch.as_slice()) {
                *a += b * inv;
            }
        }
        Ok(avg)
    }
}

/// Records one batch of instance-level predictions against the ledger.
/// A sample whose prediction changed from `a` to `b != a` increments
/// `C[a][b]`; first sightings only populate the ledger. Returns the batch
/// count matrix (zero diagonal by construction).
pub fn track_batch(
    ledger: &mut PredictionLedger,
    n_classes: usize,
    indices: &[usize],
    preds: &[usize],
) -> Result<Mat> {
    if indices.len() != preds.len() {
        return Err(Error::DimMismatch(format!(
            "{} indices vs {} predictions",
            indices.len(),
            preds.len()
        )));
    }
    let mut counts = Mat::zeros(n_classes, n_classes);
    for (&idx, &pred) in indices.iter().zip(preds) {
        if pred >= n_classes {
            return Err(Error::invalid(
                "preds",
                format!("prediction {pred} out of range (n_classes = {n_classes})"),
            ));
        }
        if let Some(&prior) = ledger.last.get(&idx) {
            if prior != pred {
                counts[(prior, pred)] += 1.0;
            }
        }
        ledger.last.insert(idx, pred);
    }
    Ok(counts)
}

/// Min-max normalization over the off-diagonal entries, mapping them into
/// [0, 1]; the diagonal is forced to 1 (a class is maximally similar to
/// itself). A constant matrix maps to zeros off-diagonal.
pub fn normalize_minmax(avg: &Mat) -> Mat {
    let n = avg.rows();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                lo = lo.min(avg[(i, j)]);
                hi = hi.max(avg[(i, j)]);
            }
        }
    }
    let span = hi - lo;
    let mut out = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] = if i == j {
                1.0
            } else if span > 0.0 {
                (avg[(i, j)] - lo) / span
            } else {
                0.0
            };
        }
    }
    out
}

/// Clusters the instance-level classes from a similarity matrix in [0, 1]:
/// symmetrize, convert to dissimilarity `1 - S`, run PAM. The `seed` is
/// accepted for interface stability; PAM itself is deterministic (BUILD and
/// SWAP break ties toward the lowest index).
pub fn cluster_classes(similarity: &Mat, k: usize, _seed: u64) -> Result<Vec<usize>> {
    let n = similarity.rows();
    if similarity.cols() != n {
        return Err(Error::DimMismatch(format!(
            "similarity matrix is {}x{}",
            n,
            similarity.cols()
        )));
    }
    if k > n {
        return Err(Error::invalid(
            "k",
            format!("k = {k} exceeds class count {n}"),
        ));
    }
    let mut dissim = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let sym = 0.5 * (similarity[(i, j)] + similarity[(j, i)]);
            dissim[(i, j)] = if i == j { 0.0 } else { (1.0 - sym).max(0.0) };
        }
    }
    Ok(pam(&dissim, k)?.assignment)
}

/// Relabels `curr` so it agrees with `prev` as much as possible: Hungarian
/// maximum-agreement matching on the k x k co-assignment contingency table.
pub fn align_indices(prev: &[usize], curr: &[usize], k: usize) -> Vec<usize> {
    assert_eq!(prev.len(), curr.len(), "assignments must cover the same classes");
    let mut table = Mat::zeros(k, k);
    for (&a, &c) in prev.iter().zip(curr) {
        table[(a, c)] += 1.0;
    }
    // Minimize (max - agreement): rows = curr labels, cols = target labels.
    let max_count = prev.len() as f64;
    let mut costs = Mat::zeros(k, k);
    for c in 0..k {
        for a in 0..k {
            costs[(c, a)] = max_count - table[(a, c)];
        }
    }
    let relabel = min_cost_assignment(&costs);
    curr.iter().map(|&c| relabel[c]).collect()
}

/// Instance-level class to cluster index map, versioned per refresh.
#[derive(Debug, Clone)]
pub struct ClusterLabelMap {
    pub mapping: Vec<usize>,
    pub version: u64,
}

/// Refreshes the label map: average the tracked batches, min-max normalize,
/// cluster with k-medoids, and align indices against the previous mapping.
pub fn update_phi(
    prev: Option<&ClusterLabelMap>,
    matrix: &TransitionMatrix,
    k: usize,
    seed: u64,
) -> Result<ClusterLabelMap> {
    let avg = matrix.average()?;
    let sim = normalize_minmax(&avg);
    let raw = cluster_classes(&sim, k, seed)?;
    let (mapping, version) = match prev {
        Some(p) => (align_indices(&p.mapping, &raw, k), p.version + 1),
        None => (raw, 1),
    };
    Ok(ClusterLabelMap { mapping, version })
}
