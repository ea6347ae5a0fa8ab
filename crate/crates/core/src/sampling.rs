//! Pseudo-labeled subset selection: the non-repeating random sampler, the
//! prototype-neighbor sampler, and the all-class coverage probability with
//! its Monte-Carlo cross-check.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kmeans::kmeans_best_of;
use crate::mat::{sq_dist, Mat};

/// Cursor over a per-epoch shuffled index order; every index is visited
/// exactly once per epoch.
#[derive(Debug, Clone)]
pub struct SamplerState {
    permutation: Vec<usize>,
    cursor: usize,
    epoch: u64,
    seed: u64,
}

impl SamplerState {
    pub fn new(n: usize, seed: u64) -> Self {
        let mut state = SamplerState {
            permutation: (0..n).collect(),
            cursor: 0,
            epoch: 0,
            seed,
        };
        state.shuffle();
        state
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn n(&self) -> usize {
        self.permutation.len()
    }

    fn shuffle(&mut self) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed.wrapping_add(self.epoch));
        self.permutation.shuffle(&mut rng);
    }

    /// Next index in the epoch order, reshuffling at the boundary.
    pub fn next_index(&mut self) -> usize {
        if self.cursor >= self.permutation.len() {
            self.cursor = 0;
            self.epoch += 1;
            self.shuffle();
        }
        let idx = self.permutation[self.cursor];
        self.cursor += 1;
        idx
    }
}

/// The per-iteration pseudo-labeled subset: sampled indices, their soft
/// instance-level labels once aligned, and mapped cluster-level labels once
/// the label map exists.
#[derive(Debug, Clone)]
pub struct PseudoLabelSet {
    pub indices: Vec<usize>,
    /// n_l x n_l row-stochastic matrix; `None` until alignment runs.
    pub soft_labels: Option<Mat>,
    /// k-way labels; `None` until the cluster-level map exists.
    pub cluster_labels: Option<Vec<usize>>,
    pub iteration: u64,
}

impl PseudoLabelSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Hard instance-level label per member: argmax of the soft row, ties
    /// toward the lowest index. Identity before alignment (first iteration).
    pub fn hard_instance_labels(&self) -> Vec<usize> {
        match &self.soft_labels {
            Some(soft) => soft.iter_rows().map(argmax_lowest).collect(),
            None => (0..self.indices.len()).collect(),
        }
    }
}

pub(crate) fn argmax_lowest(row: &[f64]) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (j, &v) in row.iter().enumerate() {
        if v > best_v {
            best_v = v;
            best = j;
        }
    }
    best
}

/// Draws the next `n_l` indices from the non-repeating sampler. When
/// `drop_classes` is set (ablation-only; requires ground-truth labels),
/// indices of dropped classes are skipped.
pub fn sample_random(
    state: &mut SamplerState,
    n_l: usize,
    drop_classes: Option<&HashSet<usize>>,
    labels: Option<&[usize]>,
    iteration: u64,
) -> Result<PseudoLabelSet> {
    let n = state.n();
    if n_l > n {
        return Err(Error::invalid(
            "n_l",
            format!("n_l = {n_l} exceeds dataset size {n}"),
        ));
    }
    if let Some(dropped) = drop_classes {
        let labels = labels.ok_or_else(|| {
            Error::invalid("drop_classes", "class dropping requires ground-truth labels")
        })?;
        let eligible = labels.iter().filter(|l| !dropped.contains(l)).count();
        if eligible < n_l {
            return Err(Error::invalid(
                "drop_classes",
                format!("only {eligible} eligible samples remain, need {n_l}"),
            ));
        }
    }

    let mut indices = Vec::with_capacity(n_l);
    while indices.len() < n_l {
        let idx = state.next_index();
        if let (Some(dropped), Some(labels)) = (drop_classes, labels) {
            if dropped.contains(&labels[idx]) {
                continue;
            }
        }
        // A draw can repeat across an epoch boundary inside one call; the
        // subset must stay distinct.
        if !indices.contains(&idx) {
            indices.push(idx);
        }
    }

    Ok(PseudoLabelSet {
        indices,
        soft_labels: None,
        cluster_labels: None,
        iteration,
    })
}

/// Prototype sampling: k-means centroids over the current features serve as
/// prototypes; each contributes its nearest unclaimed dataset points. A point
/// wanted by several prototypes goes to the nearest one and the others
/// backfill from their ranked neighbor lists, so exactly `min(n_l, n)`
/// distinct indices come back.
pub fn sample_prototypes(
    dataset: &Dataset,
    features_current: &Mat,
    k: usize,
    n_l: usize,
    seed: u64,
    iteration: u64,
) -> Result<PseudoLabelSet> {
    let n = dataset.n();
    if features_current.rows() != n {
        return Err(Error::DimMismatch(format!(
            "feature matrix has {} rows, dataset has {n}",
            features_current.rows()
        )));
    }
    if k > n {
        return Err(Error::invalid("k", format!("k = {k} exceeds n = {n}")));
    }
    let n_l = n_l.min(n);
    if n_l == 0 {
        return Err(Error::invalid("n_l", "need n_l >= 1"));
    }

    let fit = kmeans_best_of(features_current, k, seed, 50, 1e-6, 4)?;

    // floor(n_l / k) neighbors per prototype, remainder spread over the
    // first n_l mod k prototypes.
    let mut quota = vec![n_l / k; k];
    for q in quota.iter_mut().take(n_l % k) {
        *q += 1;
    }

    // Ranked neighbor lists per centroid, plus each point's nearest centroid.
    let mut dist = Mat::zeros(k, n);
    for c in 0..k {
        for i in 0..n {
            dist[(c, i)] = sq_dist(features_current.row(i), fit.centroids.row(c));
        }
    }
    let mut ranked: Vec<Vec<usize>> = Vec::with_capacity(k);
    for c in 0..k {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            dist[(c, a)]
                .partial_cmp(&dist[(c, b)])
                .unwrap()
                .then(a.cmp(&b))
        });
        ranked.push(order);
    }
    let nearest_centroid: Vec<usize> = (0..n)
        .map(|i| {
            (0..k)
                .min_by(|&a, &b| dist[(a, i)].partial_cmp(&dist[(b, i)]).unwrap())
                .unwrap()
        })
        .collect();

    // Wish phase: a point wished by several centroids goes to its nearest
    // wishing centroid (earlier wishers win otherwise).
    let mut owner = vec![usize::MAX; n];
    for c in 0..k {
        for &i in ranked[c].iter().take(quota[c]) {
            if owner[i] == usize::MAX || nearest_centroid[i] == c {
                owner[i] = c;
            }
        }
    }
    let mut selected: Vec<Vec<usize>> = vec![Vec::new(); k];
    for c in 0..k {
        for &i in ranked[c].iter().take(quota[c]) {
            if owner[i] == c && selected[c].len() < quota[c] {
                selected[c].push(i);
            }
        }
    }
    // Backfill phase: walk each ranked list past the contested losses.
    let mut claimed: HashSet<usize> = selected.iter().flatten().copied().collect();
    for c in 0..k {
        let mut it = ranked[c].iter();
        while selected[c].len() < quota[c] {
            let &i = it.next().expect("n_l <= n guarantees enough candidates");
            if !claimed.contains(&i) {
                claimed.insert(i);
                selected[c].push(i);
            }
        }
    }

    let indices: Vec<usize> = selected.into_iter().flatten().collect();
    debug_assert_eq!(indices.len(), n_l);

    Ok(PseudoLabelSet {
        indices,
        soft_labels: None,
        cluster_labels: None,
        iteration,
    })
}

/// Probability that a uniform `n_l`-subset of `n` samples (k classes of n/k
/// samples each) contains every class, by inclusion-exclusion:
///
/// `P_all = 1 - sum_{i=1..k} (-1)^(i-1) C(k,i) C(n - i n/k, n_l) / C(n, n_l)`
///
/// Each binomial ratio is evaluated as a telescoping product, so the huge
/// binomials themselves are never formed; the alternating sum uses
/// compensated (Kahan) accumulation.
pub fn coverage_probability(n_l: u64, k: u64, n: u64) -> Result<f64> {
    if k < 1 || n % k != 0 {
        return Err(Error::invalid(
            "k",
            format!("k = {k} must divide n = {n}"),
        ));
    }
    if n_l < k {
        return Err(Error::invalid(
            "n_l",
            format!("need n_l >= k, got n_l = {n_l}, k = {k}"),
        ));
    }
    if n_l > n {
        return Err(Error::invalid(
            "n_l",
            format!("n_l = {n_l} exceeds n = {n}"),
        ));
    }

    let per_class = n / k;
    let mut sum = 0.0f64;
    let mut comp = 0.0f64; // Kahan compensation
    let mut choose_k_i = 1.0f64; // C(k, i), updated incrementally
    for i in 1..=k {
        choose_k_i *= (k - i + 1) as f64 / i as f64;
        let removed = i * per_class;
        let ratio = subset_ratio(n, removed, n_l);
        if ratio == 0.0 {
            // All later terms have even more removed mass.
            break;
        }
        let term = if i % 2 == 1 { 1.0 } else { -1.0 } * choose_k_i * ratio;
        let y = term - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    Ok((1.0 - sum).clamp(0.0, 1.0))
}

/// C(n - removed, n_l) / C(n, n_l) as prod_{j=0}^{n_l-1} (n - removed - j) / (n - j),
/// with the convention C(a, b) = 0 for a < b.
fn subset_ratio(n: u64, removed: u64, n_l: u64) -> f64 {
    if n - removed < n_l {
        return 0.0;
    }
    let mut ratio = 1.0f64;
    for j in 0..n_l {
        ratio *= (n - removed - j) as f64 / (n - j) as f64;
    }
    ratio
}

/// Frequency estimate of all-class coverage over `trials` uniform draws
/// without replacement, with its binomial standard error. Serves as the
/// independent oracle for [`coverage_probability`].
pub fn coverage_probability_mc(
    n_l: u64,
    k: u64,
    n: u64,
    trials: u64,
    seed: u64,
) -> Result<(f64, f64)> {
    if k < 1 || n % k != 0 {
        return Err(Error::invalid("k", format!("k = {k} must divide n = {n}")));
    }
    if n_l < k || n_l > n {
        return Err(Error::invalid(
            "n_l",
            format!("need k <= n_l <= n, got n_l = {n_l}"),
        ));
    }
    if trials == 0 {
        return Err(Error::invalid("trials", "need trials >= 1"));
    }

    let per_class = (n / k) as usize;
    let n = n as usize;
    let n_l = n_l as usize;
    let k = k as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0u64;
    let mut seen = vec![false; k];
    // Prefix Fisher-Yates: shuffling the first n_l slots of a persistent
    // permutation draws a uniform n_l-subset per trial in O(n_l).
    let mut pool: Vec<u32> = (0..n as u32).collect();
    for _ in 0..trials {
        seen.iter_mut().for_each(|s| *s = false);
        let mut distinct = 0;
        for j in 0..n_l {
            let swap_with = j + rng.random_range(0..n - j);
            pool.swap(j, swap_with);
            let class = pool[j] as usize / per_class;
            if !seen[class] {
                seen[class] = true;
                distinct += 1;
            }
        }
        if distinct == k {
            hits += 1;
        }
    }
    let p = hits as f64 / trials as f64;
    let se = (p * (1.0 - p) / trials as f64).sqrt();
    Ok((p, se))
}
