//! Entropic optimal transport for semantic alignment: cosine cost between
//! current and anchor features, Sinkhorn-Knopp scaling under uniform
//! marginals, and row normalization of the plan into soft labels.

use crate::error::{Error, Result};
use crate::mat::{dot, Mat};

/// Pairwise alignment cost: `O_ij = 1 - cos(feats_t[i], feats_anchor[j])`,
/// so entries live in [0, 2].
#[derive(Debug, Clone)]
pub struct CostMatrix {
    pub values: Mat,
}

/// A nonnegative coupling with uniform row/column marginals.
#[derive(Debug, Clone)]
pub struct TransportPlan {
    pub values: Mat,
    pub row_marginal: Vec<f64>,
    pub col_marginal: Vec<f64>,
    pub lambda: f64,
    /// Sinkhorn iterations actually used.
    pub iterations: usize,
    /// Final infinity-norm marginal violation.
    pub max_violation: f64,
}

/// Builds the cosine cost between L2-normalized rows of the two feature
/// matrices. A zero-norm row makes the cosine undefined and is an error.
pub fn cost_matrix(feats_t: &Mat, feats_anchor: &Mat) -> Result<CostMatrix> {
    if feats_t.cols() != feats_anchor.cols() {
        return Err(Error::DimMismatch(format!(
            "feature widths differ: {} vs {}",
            feats_t.cols(),
            feats_anchor.cols()
        )));
    }
    let a = normalize_rows(feats_t, "current features")?;
    let b = normalize_rows(feats_anchor, "anchor features")?;
    let mut values = Mat::zeros(a.rows(), b.rows());
    for i in 0..a.rows() {
        for j in 0..b.rows() {
            values[(i, j)] = (1.0 - dot(a.row(i), b.row(j))).clamp(0.0, 2.0);
        }
    }
    Ok(CostMatrix { values })
}

fn normalize_rows(m: &Mat, what: &str) -> Result<Mat> {
    let mut out = m.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let norm = dot(row, row).sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::NonFinite(format!(
                "{what}: sample {i} has zero or non-finite norm"
            )));
        }
        for v in row.iter_mut() {
            *v /= norm;
        }
    }
    Ok(out)
}

/// Solves the entropic OT problem `min <P,O> + lambda sum P log P` over
/// couplings with uniform marginals, by Sinkhorn scaling. Switches to
/// log-domain updates when `exp(-O/lambda)` would underflow.
pub fn sinkhorn(cost: &CostMatrix, lambda: f64, max_iters: usize, tol: f64) -> Result<TransportPlan> {
    let o = &cost.values;
    let n = o.rows();
    if o.cols() != n {
        return Err(Error::DimMismatch(format!(
            "cost matrix is {}x{}, need square",
            n,
            o.cols()
        )));
    }
    if !(lambda > 0.0) {
        return Err(Error::invalid("lambda", format!("need lambda > 0, got {lambda}")));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid("tol", format!("need tol > 0, got {tol}")));
    }
    if !o.is_finite() {
        return Err(Error::NonFinite("cost matrix".into()));
    }

    let alpha = vec![1.0 / n as f64; n];
    let beta = alpha.clone();

    // exp(-max_cost / lambda) underflows below roughly e^-708.
    let max_cost = o.as_slice().iter().fold(0.0f64, |m, &v| m.max(v));
    let use_log = -max_cost / lambda < f64::MIN_POSITIVE.ln();

    let solved = if use_log {
        sinkhorn_log(o, &alpha, &beta, lambda, max_iters, tol)
    } else {
        match sinkhorn_plain(o, &alpha, &beta, lambda, max_iters, tol) {
            Ok(plan) => Ok(plan),
            // A non-finite scaling in the plain path means lambda is small
            // for this cost scale; the log-domain path handles it.
            Err(Error::SinkhornDiverged(_)) => sinkhorn_log(o, &alpha, &beta, lambda, max_iters, tol),
            Err(e) => Err(e),
        }
    }?;

    let (values, iterations, max_violation) = solved;
    Ok(TransportPlan {
        values,
        row_marginal: alpha,
        col_marginal: beta,
        lambda,
        iterations,
        max_violation,
    })
}

fn marginal_violation(p: &Mat, alpha: &[f64], beta: &[f64]) -> f64 {
    let mut v: f64 = 0.0;
    for (s, a) in p.row_sums().iter().zip(alpha) {
        v = v.max((s - a).abs());
    }
    for (s, b) in p.col_sums().iter().zip(beta) {
        v = v.max((s - b).abs());
    }
    v
}

fn sinkhorn_plain(
    o: &Mat,
    alpha: &[f64],
    beta: &[f64],
    lambda: f64,
    max_iters: usize,
    tol: f64,
) -> Result<(Mat, usize, f64)> {
    let n = o.rows();
    let kernel = o.map(|c| (-c / lambda).exp());
    let mut u = vec![1.0; n];
    let mut v = vec![1.0; n];
    let mut iterations = 0;
    let mut violation = f64::INFINITY;

    for iter in 1..=max_iters {
        iterations = iter;
        // u = alpha ./ (K v)
        for i in 0..n {
            let kv = dot(kernel.row(i), &v);
            u[i] = alpha[i] / kv;
        }
        // v = beta ./ (K^T u)
        for j in 0..n {
            let mut ktu = 0.0;
            for i in 0..n {
                ktu += kernel[(i, j)] * u[i];
            }
            v[j] = beta[j] / ktu;
        }
        if u.iter().chain(&v).any(|x| !x.is_finite()) {
            return Err(Error::SinkhornDiverged(format!(
                "non-finite scaling at iteration {iter} (lambda = {lambda})"
            )));
        }
        violation = {
            let p = plan_from_scalings(&kernel, &u, &v);
            marginal_violation(&p, alpha, beta)
        };
        if violation < tol {
            break;
        }
    }

    let p = plan_from_scalings(&kernel, &u, &v);
    if !p.is_finite() {
        return Err(Error::SinkhornDiverged("non-finite transport plan".into()));
    }
    Ok((p, iterations, violation))
}

fn plan_from_scalings(kernel: &Mat, u: &[f64], v: &[f64]) -> Mat {
    let n = kernel.rows();
    let mut p = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            p[(i, j)] = u[i] * kernel[(i, j)] * v[j];
        }
    }
    p
}

/// Log-domain Sinkhorn with dual potentials f, g:
/// `P_ij = exp((f_i + g_j - O_ij) / lambda)`.
fn sinkhorn_log(
    o: &Mat,
    alpha: &[f64],
    beta: &[f64],
    lambda: f64,
    max_iters: usize,
    tol: f64,
) -> Result<(Mat, usize, f64)> {
    let n = o.rows();
    let mut f = vec![0.0f64; n];
    let mut g = vec![0.0f64; n];
    let ln_alpha: Vec<f64> = alpha.iter().map(|a| a.ln()).collect();
    let ln_beta: Vec<f64> = beta.iter().map(|b| b.ln()).collect();
    let mut iterations = 0;
    let mut violation = f64::INFINITY;
    let mut buf = vec![0.0f64; n];

    for iter in 1..=max_iters {
        iterations = iter;
        for i in 0..n {
            for (j, b) in buf.iter_mut().enumerate() {
                *b = (g[j] - o[(i, j)]) / lambda;
            }
            f[i] = lambda * (ln_alpha[i] - log_sum_exp(&buf));
        }
        for j in 0..n {
            for (i, b) in buf.iter_mut().enumerate() {
                *b = (f[i] - o[(i, j)]) / lambda;
            }
            g[j] = lambda * (ln_beta[j] - log_sum_exp(&buf));
        }
        if f.iter().chain(&g).any(|x| !x.is_finite()) {
            return Err(Error::SinkhornDiverged(format!(
                "non-finite potential at iteration {iter} (lambda = {lambda})"
            )));
        }
        let p = plan_from_potentials(o, &f, &g, lambda);
        violation = marginal_violation(&p, alpha, beta);
        if violation < tol {
            break;
        }
    }

    let p = plan_from_potentials(o, &f, &g, lambda);
    if !p.is_finite() {
        return Err(Error::SinkhornDiverged("non-finite transport plan".into()));
    }
    Ok((p, iterations, violation))
}

fn plan_from_potentials(o: &Mat, f: &[f64], g: &[f64], lambda: f64) -> Mat {
    let n = o.rows();
    let mut p = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            p[(i, j)] = ((f[i] + g[j] - o[(i, j)]) / lambda).exp();
        }
    }
    p
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

/// `<P, O> + lambda sum P log P`, the quantity Sinkhorn minimizes.
pub fn entropic_objective(plan: &TransportPlan, cost: &CostMatrix) -> f64 {
    let mut obj = 0.0;
    for (p, o) in plan.values.as_slice().iter().zip(cost.values.as_slice()) {
        obj += p * o;
        if *p > 0.0 {
            obj += plan.lambda * p * p.ln();
        }
    }
    obj
}

/// `<P, O>` alone, the transport cost of the plan.
pub fn transport_cost(plan: &TransportPlan, cost: &CostMatrix) -> f64 {
    plan.values
        .as_slice()
        .iter()
        .zip(cost.values.as_slice())
        .map(|(p, o)| p * o)
        .sum()
}

/// Normalizes each plan row to sum to one, giving the soft instance-level
/// labels.
pub fn plan_to_soft_labels(plan: &TransportPlan) -> Result<Mat> {
    let mut soft = plan.values.clone();
    for i in 0..soft.rows() {
        let row = soft.row_mut(i);
        let sum: f64 = row.iter().sum();
        if !(sum > 0.0) {
            return Err(Error::NonFinite(format!("transport plan row {i} sums to {sum}")));
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    Ok(soft)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_cost(n: usize, c: f64) -> CostMatrix {
        CostMatrix {
            values: Mat::filled(n, n, c),
        }
    }

    #[test]
    fn cost_matrix_orthonormal_rows() {
        let eye = Mat::eye(3);
        let cost = cost_matrix(&eye, &eye).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 0.0 } else { 1.0 };
                assert!((cost.values[(i, j)] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cost_matrix_antipodal_is_two() {
        let a = Mat::from_rows(&[vec![1.0, 2.0, -0.5]]);
        let b = Mat::from_rows(&[vec![-1.0, -2.0, 0.5]]);
        let cost = cost_matrix(&a, &b).unwrap();
        assert!((cost.values[(0, 0)] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn cost_matrix_matches_scalar_oracle() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let a = Mat::from_vec(3, 4, (0..12).map(|_| rng.random::<f64>() - 0.5).collect());
        let b = Mat::from_vec(3, 4, (0..12).map(|_| rng.random::<f64>() - 0.5).collect());
        let cost = cost_matrix(&a, &b).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                // Independent per-pair cosine computation.
                let (x, y) = (a.row(i), b.row(j));
                let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
                let cos = x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>() / (nx * ny);
                assert!((cost.values[(i, j)] - (1.0 - cos)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cost_matrix_rejects_zero_norm_row() {
        let a = Mat::from_rows(&[vec![0.0, 0.0]]);
        let b = Mat::from_rows(&[vec![1.0, 0.0]]);
        let err = cost_matrix(&a, &b).unwrap_err();
        assert!(err.to_string().contains("sample 0"));
    }

    #[test]
    fn constant_cost_gives_uniform_plan() {
        let plan = sinkhorn(&uniform_cost(2, 0.7), 0.1, 1000, 1e-9).unwrap();
        for v in plan.values.as_slice() {
            assert!((v - 0.25).abs() < 1e-9);
        }
    }

    #[test]
    fn two_by_two_closed_form() {
        // Symmetric cost [[0,1],[1,0]] with uniform marginals: the scaled
        // kernel is itself symmetric, so P = c^2 [[1, e^(-1/l)], [e^(-1/l), 1]]
        // with row sums 1/2, i.e. diagonal a = 0.5 / (1 + e^(-1/lambda)).
        let cost = CostMatrix {
            values: Mat::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]),
        };
        let lambda = 0.1;
        let plan = sinkhorn(&cost, lambda, 5000, 1e-12).unwrap();
        let a = 0.5 / (1.0 + (-1.0 / lambda).exp());
        let off = 0.5 - a;
        assert!((plan.values[(0, 0)] - a).abs() < 1e-9, "{}", plan.values[(0, 0)]);
        assert!((plan.values[(0, 1)] - off).abs() < 1e-9);
        assert!((plan.values[(1, 0)] - off).abs() < 1e-9);
        assert!((plan.values[(1, 1)] - a).abs() < 1e-9);
        // Spot value from the derivation: a = 0.499977..., off = 2.27e-5.
        assert!((plan.values[(0, 0)] - 0.499977).abs() < 1e-6);
        assert!((plan.values[(0, 1)] - 2.27e-5).abs() < 1e-6);
    }

    #[test]
    fn marginals_match_within_tolerance() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for &n in &[2usize, 5, 17] {
            let data: Vec<f64> = (0..n * n).map(|_| rng.random::<f64>() * 2.0).collect();
            let cost = CostMatrix {
                values: Mat::from_vec(n, n, data),
            };
            let plan = sinkhorn(&cost, 0.1, 50_000, 1e-7).unwrap();
            assert!(plan.max_violation < 1e-6, "violation {}", plan.max_violation);
            assert!(plan.values.as_slice().iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn objective_matches_long_run_reference() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let n = 5;
        let data: Vec<f64> = (0..n * n).map(|_| rng.random::<f64>() * 2.0).collect();
        let cost = CostMatrix {
            values: Mat::from_vec(n, n, data.clone()),
        };
        let lambda = 0.05;
        let plan = sinkhorn(&cost, lambda, 2000, 1e-10).unwrap();
        let obj = entropic_objective(&plan, &cost);

        // Reference oracle: plain matrix-scaling Sinkhorn, written
        // independently, run 10^4 iterations.
        let mut p: Vec<f64> = data.iter().map(|c| (-c / lambda).exp()).collect();
        for _ in 0..10_000 {
            for i in 0..n {
                let s: f64 = p[i * n..(i + 1) * n].iter().sum();
                for j in 0..n {
                    p[i * n + j] *= (1.0 / n as f64) / s;
                }
            }
            for j in 0..n {
                let s: f64 = (0..n).map(|i| p[i * n + j]).sum();
                for i in 0..n {
                    p[i * n + j] *= (1.0 / n as f64) / s;
                }
            }
        }
        let mut ref_obj = 0.0;
        for (pi, ci) in p.iter().zip(&data) {
            ref_obj += pi * ci + lambda * pi * pi.ln();
        }
        assert!(
            (obj - ref_obj).abs() < 1e-6,
            "objective {obj} vs reference {ref_obj}"
        );
    }

    #[test]
    fn tiny_lambda_uses_log_domain_and_stays_finite() {
        let cost = CostMatrix {
            values: Mat::from_rows(&[vec![0.0, 1.3], vec![1.7, 0.2]]),
        };
        let plan = sinkhorn(&cost, 0.001, 5000, 1e-8).unwrap();
        assert!(plan.values.is_finite());
        assert!(plan.max_violation < 1e-6);
    }

    #[test]
    fn large_lambda_approaches_uniform_outer_product() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let n = 6;
        let data: Vec<f64> = (0..n * n).map(|_| rng.random::<f64>() * 2.0).collect();
        let cost = CostMatrix {
            values: Mat::from_vec(n, n, data),
        };
        let plan = sinkhorn(&cost, 100.0, 2000, 1e-10).unwrap();
        let uniform = 1.0 / (n * n) as f64;
        for &v in plan.values.as_slice() {
            assert!((v - uniform).abs() < 1e-3, "entry {v} vs {uniform}");
        }
    }

    #[test]
    fn plan_invariant_to_constant_cost_shift() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let n = 4;
        let data: Vec<f64> = (0..n * n).map(|_| rng.random::<f64>()).collect();
        let shifted: Vec<f64> = data.iter().map(|v| v + 0.75).collect();
        let p1 = sinkhorn(
            &CostMatrix {
                values: Mat::from_vec(n, n, data),
            },
            0.05,
            5000,
            1e-10,
        )
        .unwrap();
        let p2 = sinkhorn(
            &CostMatrix {
                values: Mat::from_vec(n, n, shifted),
            },
            0.05,
            5000,
            1e-10,
        )
        .unwrap();
        for (a, b) in p1.values.as_slice().iter().zip(p2.values.as_slice()) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn soft_labels_row_stochastic() {
        let plan = sinkhorn(&uniform_cost(3, 1.0), 0.5, 500, 1e-9).unwrap();
        let soft = plan_to_soft_labels(&plan).unwrap();
        for row in soft.iter_rows() {
            let s: f64 = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            for &v in row {
                assert!((v - 1.0 / 3.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn soft_labels_of_sharp_two_by_two_plan() {
        let cost = CostMatrix {
            values: Mat::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]),
        };
        let plan = sinkhorn(&cost, 0.1, 5000, 1e-12).unwrap();
        let soft = plan_to_soft_labels(&plan).unwrap();
        // Rows of the near-diagonal plan normalize to about (0.99995, 4.5e-5).
        assert!((soft[(0, 0)] - 0.99995).abs() < 1e-5);
        assert!((soft[(0, 1)] - 4.5e-5).abs() < 1e-5);
        assert!((soft[(1, 1)] - 0.99995).abs() < 1e-5);
    }

    #[test]
    fn rejects_nonpositive_lambda() {
        assert!(sinkhorn(&uniform_cost(2, 1.0), 0.0, 10, 1e-6).is_err());
        assert!(sinkhorn(&uniform_cost(2, 1.0), -1.0, 10, 1e-6).is_err());
    }
}
