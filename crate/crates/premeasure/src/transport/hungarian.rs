//! Hungarian algorithm (shortest augmenting paths with potentials, O(n^3))
//! for square assignment problems.
//!
//! Kept deliberately separate from the network simplex: the test suite and
//! the acceptance checks use it as an independent oracle for exact transport
//! costs on equal-size uniform instances.

use crate::error::{Error, Result};

/// Minimum-cost perfect matching of a square cost matrix.
/// Returns `(assignment, cost)` where `assignment[i]` is the column matched
/// to row `i`.
pub fn solve(cost: &[Vec<f64>]) -> Result<(Vec<usize>, f64)> {
    let n = cost.len();
    if n == 0 {
        return Err(Error::EmptyInput("cost matrix"));
    }
    for row in cost {
        if row.len() != n {
            return Err(Error::LengthMismatch("cost matrix must be square".into()));
        }
        if row.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("assignment cost"));
        }
    }

    // Row/column potentials; p[j] is the row matched to column j (1-based,
    // 0 meaning unmatched). Classic formulation over a virtual column 0.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
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
        assignment[p[j] - 1] = j - 1;
    }
    let total: f64 = assignment
        .iter()
        .enumerate()
        .map(|(i, &j)| cost[i][j])
        .sum();
    Ok((assignment, total))
}
