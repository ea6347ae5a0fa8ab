//! k-medoids via PAM: greedy BUILD initialization, then steepest-descent
//! SWAP until no exchange improves the cost. The swap neighborhood escalates
//! from single exchanges to pair and triple exchanges (within a fixed effort
//! budget): single swaps alone stall on local optima whose improving move
//! replaces several medoids at once, already reachable on 4-point instances.
//! For k <= 3 every medoid set is one depth-<=3 move away, so convergence
//! there implies the exact optimum.

use crate::error::{Error, Result};
use crate::mat::Mat;

/// Deep swap scans are skipped when they would evaluate more candidate sets
/// than this.
const SWAP_SCAN_BUDGET: usize = 500_000;

#[derive(Debug, Clone)]
pub struct PamFit {
    /// Indices of the chosen medoids, in selection order.
    pub medoids: Vec<usize>,
    /// Medoid slot (0..k) each point is assigned to.
    pub assignment: Vec<usize>,
    /// Total dissimilarity of points to their medoids.
    pub cost: f64,
}

/// Runs PAM on a square dissimilarity matrix. Ties break toward the lowest
/// index, so the result is deterministic.
pub fn pam(dissim: &Mat, k: usize) -> Result<PamFit> {
    let n = dissim.rows();
    if dissim.cols() != n {
        return Err(Error::DimMismatch(format!(
            "dissimilarity matrix is {}x{}",
            n,
            dissim.cols()
        )));
    }
    if k == 0 || k > n {
        return Err(Error::invalid(
            "k",
            format!("need 1 <= k <= n, got k = {k}, n = {n}"),
        ));
    }

    let mut medoids = build(dissim, k);

    let max_rounds = 100 * n.max(1);
    for _ in 0..max_rounds {
        let mut improved = false;
        for depth in 1..=3.min(k) {
            if swap_scan_size(n, k, depth) <= SWAP_SCAN_BUDGET
                && apply_best_swap(dissim, &mut medoids, depth)
            {
                improved = true;
                break;
            }
        }
        if !improved {
            break;
        }
    }

    let assignment = assign(dissim, &medoids);
    let cost = total_cost(dissim, &medoids);
    Ok(PamFit {
        medoids,
        assignment,
        cost,
    })
}

/// Number of candidate sets a depth-d swap scan evaluates.
fn swap_scan_size(n: usize, k: usize, depth: usize) -> usize {
    choose(k, depth).saturating_mul(choose(n - k, depth))
}

fn choose(n: usize, r: usize) -> usize {
    if r > n {
        return 0;
    }
    let mut acc = 1usize;
    for i in 0..r {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

/// Steepest-descent move: replaces `depth` medoids with `depth` candidates if
/// some such exchange lowers the cost. Returns whether anything changed.
fn apply_best_swap(dissim: &Mat, medoids: &mut [usize], depth: usize) -> bool {
    let n = dissim.rows();
    let k = medoids.len();
    let candidates: Vec<usize> = (0..n).filter(|c| !medoids.contains(c)).collect();
    if candidates.len() < depth {
        return false;
    }
    let mut best_cost = total_cost(dissim, medoids);
    let mut best: Option<(Vec<usize>, Vec<usize>)> = None;

    let mut slot_combo = first_combo(depth);
    loop {
        let mut cand_combo = first_combo(depth);
        loop {
            let mut trial = medoids.to_vec();
            for (d, &slot) in slot_combo.iter().enumerate() {
                trial[slot] = candidates[cand_combo[d]];
            }
            let cost = total_cost(dissim, &trial);
            if cost < best_cost - 1e-12 {
                best_cost = cost;
                best = Some((slot_combo.clone(), cand_combo.clone()));
            }
            if !next_combo(&mut cand_combo, candidates.len()) {
                break;
            }
        }
        if !next_combo(&mut slot_combo, k) {
            break;
        }
    }

    match best {
        Some((slots, cands)) => {
            for (d, &slot) in slots.iter().enumerate() {
                medoids[slot] = candidates[cands[d]];
            }
            true
        }
        None => false,
    }
}

fn first_combo(r: usize) -> Vec<usize> {
    (0..r).collect()
}

/// Advances a sorted r-combination over {0..m-1}; false when exhausted.
fn next_combo(combo: &mut [usize], m: usize) -> bool {
    let r = combo.len();
    let mut i = r;
    while i > 0 {
        i -= 1;
        if combo[i] < m - (r - i) {
            combo[i] += 1;
            for j in (i + 1)..r {
                combo[j] = combo[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Greedy BUILD: first the point minimizing total dissimilarity, then the
/// point giving the largest cost reduction, k times.
fn build(dissim: &Mat, k: usize) -> Vec<usize> {
    let n = dissim.rows();
    let mut medoids = Vec::with_capacity(k);

    let first = (0..n)
        .min_by(|&a, &b| {
            let ca: f64 = (0..n).map(|j| dissim[(a, j)]).sum();
            let cb: f64 = (0..n).map(|j| dissim[(b, j)]).sum();
            ca.partial_cmp(&cb).unwrap().then(a.cmp(&b))
        })
        .unwrap();
    medoids.push(first);

    let mut nearest: Vec<f64> = (0..n).map(|j| dissim[(first, j)]).collect();
    while medoids.len() < k {
        let mut best = usize::MAX;
        let mut best_gain = f64::NEG_INFINITY;
        for cand in 0..n {
            if medoids.contains(&cand) {
                continue;
            }
            let gain: f64 = (0..n)
                .map(|j| (nearest[j] - dissim[(cand, j)]).max(0.0))
                .sum();
            if gain > best_gain {
                best_gain = gain;
                best = cand;
            }
        }
        medoids.push(best);
        for j in 0..n {
            if dissim[(best, j)] < nearest[j] {
                nearest[j] = dissim[(best, j)];
            }
        }
    }
    medoids
}

fn total_cost(dissim: &Mat, medoids: &[usize]) -> f64 {
    let n = dissim.rows();
    (0..n)
        .map(|j| {
            medoids
                .iter()
                .map(|&m| dissim[(m, j)])
                .fold(f64::INFINITY, f64::min)
        })
        .sum()
}

fn assign(dissim: &Mat, medoids: &[usize]) -> Vec<usize> {
    let n = dissim.rows();
    (0..n)
        .map(|j| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (slot, &m) in medoids.iter().enumerate() {
                if dissim[(m, j)] < best_d {
                    best_d = dissim[(m, j)];
                    best = slot;
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;

    /// Exhaustive optimum over all medoid subsets.
    pub(crate) fn brute_force_cost(dissim: &Mat, k: usize) -> f64 {
        let mut best = f64::INFINITY;
        let mut subset = Vec::with_capacity(k);
        fn rec(dissim: &Mat, k: usize, start: usize, subset: &mut Vec<usize>, best: &mut f64) {
            if subset.len() == k {
                let cost = super::total_cost(dissim, subset);
                if cost < *best {
                    *best = cost;
                }
                return;
            }
            for i in start..dissim.rows() {
                subset.push(i);
                rec(dissim, k, i + 1, subset, best);
                subset.pop();
            }
        }
        rec(dissim, k, 0, &mut subset, &mut best);
        best
    }

    fn random_dissim(n: usize, rng: &mut impl Rng) -> Mat {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let v = rng.random::<f64>();
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }

    #[test]
    fn two_block_instance() {
        // Points {0,1} close, {2,3} close, cross distance large.
        let d = Mat::from_rows(&[
            vec![0.0, 0.1, 0.9, 0.9],
            vec![0.1, 0.0, 0.9, 0.9],
            vec![0.9, 0.9, 0.0, 0.1],
            vec![0.9, 0.9, 0.1, 0.0],
        ]);
        let fit = pam(&d, 2).unwrap();
        assert_eq!(fit.assignment[0], fit.assignment[1]);
        assert_eq!(fit.assignment[2], fit.assignment[3]);
        assert_ne!(fit.assignment[0], fit.assignment[2]);
        assert!((fit.cost - 0.2).abs() < 1e-12);
    }

    #[test]
    fn matches_exhaustive_on_small_instances() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let n = rng.random_range(3..=8);
            let k = rng.random_range(1..=3.min(n));
            let d = random_dissim(n, &mut rng);
            let fit = pam(&d, k).unwrap();
            let want = brute_force_cost(&d, k);
            assert!(
                (fit.cost - want).abs() < 1e-9,
                "n={n} k={k}: pam {} vs brute {}",
                fit.cost,
                want
            );
        }
    }

    #[test]
    fn k_equals_n_zero_cost() {
        let d = Mat::from_rows(&[vec![0.0, 0.5], vec![0.5, 0.0]]);
        let fit = pam(&d, 2).unwrap();
        assert_eq!(fit.cost, 0.0);
    }

    #[test]
    fn rejects_k_above_n() {
        let d = Mat::zeros(3, 3);
        assert!(pam(&d, 4).is_err());
    }
}
