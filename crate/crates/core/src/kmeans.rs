//! Lloyd's k-means with k-means++ seeding. Used for prototype discovery and
//! as the reference clustering baseline.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mat::{sq_dist, Mat};

#[derive(Debug, Clone)]
pub struct KMeansFit {
    /// k x d centroid matrix.
    pub centroids: Mat,
    /// Cluster index per input row.
    pub assignment: Vec<usize>,
    /// Sum of squared distances to assigned centroids.
    pub inertia: f64,
    pub iterations: usize,
}

/// Best of several seeded [`kmeans`] runs by inertia, the usual guard
/// against an unlucky seeding.
pub fn kmeans_best_of(
    points: &Mat,
    k: usize,
    seed: u64,
    max_iters: usize,
    tol: f64,
    restarts: usize,
) -> Result<KMeansFit> {
    let mut best: Option<KMeansFit> = None;
    for r in 0..restarts.max(1) {
        let fit = kmeans(points, k, seed.wrapping_add(r as u64), max_iters, tol)?;
        if best.as_ref().is_none_or(|b| fit.inertia < b.inertia) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Runs k-means++ initialization followed by Lloyd updates until the relative
/// inertia change drops below `tol` or `max_iters` passes complete.
pub fn kmeans(points: &Mat, k: usize, seed: u64, max_iters: usize, tol: f64) -> Result<KMeansFit> {
    let n = points.rows();
    if k == 0 || k > n {
        return Err(Error::invalid(
            "k",
            format!("need 1 <= k <= n, got k = {k}, n = {n}"),
        ));
    }
    let d = points.cols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut centroids = points.gather_rows(&plus_plus_init(points, k, &mut rng));
    let mut assignment = vec![0usize; n];
    let mut inertia = f64::INFINITY;
    let mut iterations = 0;

    for iter in 0..max_iters {
        iterations = iter + 1;

        // Assignment step.
        let mut new_inertia = 0.0;
        for i in 0..n {
            let row = points.row(i);
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for c in 0..k {
                let dist = sq_dist(row, centroids.row(c));
                if dist < best_d {
                    best_d = dist;
                    best = c;
                }
            }
            assignment[i] = best;
            new_inertia += best_d;
        }

        // Update step.
        let mut sums = Mat::zeros(k, d);
        let mut counts = vec![0usize; k];
        for i in 0..n {
            counts[assignment[i]] += 1;
            let dst = sums.row_mut(assignment[i]);
            for (s, v) in dst.iter_mut().zip(points.row(i)) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // Re-seed an empty cluster with the point farthest from its
                // current centroid.
                let far = (0..n)
                    .max_by(|&a, &b| {
                        let da = sq_dist(points.row(a), centroids.row(assignment[a]));
                        let db = sq_dist(points.row(b), centroids.row(assignment[b]));
                        da.partial_cmp(&db).unwrap()
                    })
                    .unwrap();
                centroids.row_mut(c).copy_from_slice(points.row(far));
                assignment[far] = c;
            } else {
                let inv = 1.0 / counts[c] as f64;
                let dst = centroids.row_mut(c);
                for (cj, sj) in dst.iter_mut().zip(sums.row(c)) {
                    *cj = sj * inv;
                }
            }
        }

        let rel_change = (inertia - new_inertia).abs() / new_inertia.max(f64::MIN_POSITIVE);
        inertia = new_inertia;
        if rel_change < tol {
            break;
        }
    }

    Ok(KMeansFit {
        centroids,
        assignment,
        inertia,
        iterations,
    })
}

/// k-means++ seeding: first center uniform, then D^2-weighted draws.
fn plus_plus_init(points: &Mat, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = points.rows();
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.random_range(0..n));

    let mut min_d: Vec<f64> = (0..n)
        .map(|i| sq_dist(points.row(i), points.row(chosen[0])))
        .collect();

    while chosen.len() < k {
        let total: f64 = min_d.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in min_d.iter().enumerate() {
                target -= w;
                if target <= 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            // All remaining mass at zero distance: fall back to the first
            // index not already chosen.
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
        for i in 0..n {
            let dist = sq_dist(points.row(i), points.row(next));
            if dist < min_d[i] {
                min_d[i] = dist;
            }
        }
    }
    chosen
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_two_obvious_pairs() {
        let points = Mat::from_rows(&[vec![0.0], vec![0.1], vec![5.0], vec![5.1]]);
        let fit = kmeans(&points, 2, 0, 50, 1e-6).unwrap();
        assert_eq!(fit.assignment[0], fit.assignment[1]);
        assert_eq!(fit.assignment[2], fit.assignment[3]);
        assert_ne!(fit.assignment[0], fit.assignment[2]);
        assert!(fit.inertia < 0.02);
    }

    #[test]
    fn deterministic_per_seed() {
        let points = Mat::from_rows(&[
            vec![0.0, 0.0],
            vec![1.0, 0.5],
            vec![8.0, 8.0],
            vec![9.0, 8.5],
            vec![-4.0, 7.0],
        ]);
        let a = kmeans(&points, 3, 42, 50, 1e-6).unwrap();
        let b = kmeans(&points, 3, 42, 50, 1e-6).unwrap();
        assert_eq!(a.assignment, b.assignment);
        assert_eq!(a.centroids, b.centroids);
    }

    #[test]
    fn k_equals_n_gives_zero_inertia() {
        let points = Mat::from_rows(&[vec![0.0], vec![2.0], vec![4.0]]);
        let fit = kmeans(&points, 3, 1, 50, 1e-6).unwrap();
        assert!(fit.inertia < 1e-12);
    }

    #[test]
    fn rejects_k_above_n() {
        let points = Mat::from_rows(&[vec![0.0], vec![2.0]]);
        assert!(kmeans(&points, 3, 0, 50, 1e-6).is_err());
    }
}
