//! Dense O(n^3) Hungarian solver for the square linear assignment problem,
//! over f64 costs. Shared by cluster-index alignment, clustering accuracy,
//! and the exact-transport oracle.

use crate::mat::Mat;

/// Returns the column assigned to each row minimizing the total cost.
/// `costs` must be square and finite.
pub fn min_cost_assignment(costs: &Mat) -> Vec<usize> {
    let n = costs.rows();
    assert_eq!(n, costs.cols(), "cost matrix must be square");
    if n == 0 {
        return Vec::new();
    }
    debug_assert!(costs.is_finite(), "costs must be finite");

    let inf = f64::INFINITY;
    // 1-based potentials over rows (u) and columns (v); p[j] = row matched to
    // column j (0 = unmatched sentinel).
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];

        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;

            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = costs[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }

            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }

            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }

        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Total cost of an assignment under a cost matrix.
pub fn assignment_cost(costs: &Mat, assignment: &[usize]) -> f64 {
    assignment
        .iter()
        .enumerate()
        .map(|(i, &j)| costs[(i, j)])
        .sum()
}
