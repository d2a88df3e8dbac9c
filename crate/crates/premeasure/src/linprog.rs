//! A small dense primal simplex for problems of the form
//! `max c'x  s.t.  Ax <= b, x >= 0` with `b >= 0`, so the slack basis is
//! feasible and no phase-one is needed.
//!
//! This backs the Kantorovich–Rubinstein dual evaluation and is intentionally
//! independent of the network simplex in `transport`: the two sides of the
//! primal–dual check must not share a solver.

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-9;

/// Solve `max c'x : Ax <= b, x >= 0`. Returns (x, objective).
pub fn maximize(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Result<(Vec<f64>, f64)> {
    let m = a.len();
    let n = c.len();
    if b.len() != m {
        return Err(Error::LengthMismatch("rhs length != row count".into()));
    }
    if b.iter().any(|&x| x < 0.0) {
        return Err(Error::InvalidConfig("rhs must be nonnegative".into()));
    }
    for row in a {
        if row.len() != n {
            return Err(Error::LengthMismatch("A row length != variable count".into()));
        }
    }

    // Tableau: m rows of [A | I | b], objective row [-c | 0 | 0].
    let width = n + m + 1;
    let mut t: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
    for (i, row) in a.iter().enumerate() {
        let mut r = vec![0.0; width];
        r[..n].copy_from_slice(row);
        r[n + i] = 1.0;
        r[width - 1] = b[i];
        t.push(r);
    }
    let mut obj = vec![0.0; width];
    for (j, &cj) in c.iter().enumerate() {
        obj[j] = -cj;
    }
    t.push(obj);

    let mut basis: Vec<usize> = (n..n + m).collect();
    let max_pivots = 200 * (m + n) + 10_000;
    let mut degenerate = 0usize;

    for _ in 0..max_pivots {
        // Entering column: most negative objective coefficient; Bland's rule
        // (first negative) once pivots degenerate.
        let use_bland = degenerate > 4 * (m + n);
        let mut col = usize::MAX;
        let mut best = -PIVOT_TOL;
        for j in 0..n + m {
            let v = t[m][j];
            if v < best {
                col = j;
                best = v;
                if use_bland {
                    break;
                }
            }
        }
        if col == usize::MAX {
            break; // optimal
        }
        // Ratio test; ties resolved by smallest basis index (Bland-safe).
        let mut row = usize::MAX;
        let mut best_ratio = f64::INFINITY;
        for i in 0..m {
            if t[i][col] > PIVOT_TOL {
                let ratio = t[i][width - 1] / t[i][col];
                if ratio < best_ratio - 1e-12
                    || (ratio < best_ratio + 1e-12
                        && (row == usize::MAX || basis[i] < basis[row]))
                {
                    best_ratio = ratio;
                    row = i;
                }
            }
        }
        if row == usize::MAX {
            return Err(Error::Internal("LP unbounded".into()));
        }
        if best_ratio < 1e-12 {
            degenerate += 1;
        }
        pivot(&mut t, row, col);
        basis[row] = col;
    }

    if t[m][..n + m].iter().any(|&v| v < -PIVOT_TOL) {
        return Err(Error::NonConvergence {
            what: "dense simplex",
            iterations: max_pivots,
            residual: t[m][..n + m].iter().cloned().fold(0.0, f64::min),
            trace: vec![],
        });
    }

    let mut x = vec![0.0; n];
    for (i, &bi) in basis.iter().enumerate() {
        if bi < n {
            x[bi] = t[i][width - 1];
        }
    }
    Ok((x, t[m][width - 1]))
}

fn pivot(t: &mut [Vec<f64>], row: usize, col: usize) {
    let width = t[0].len();
    let p = t[row][col];
    for v in t[row].iter_mut() {
        *v /= p;
    }
    for i in 0..t.len() {
        if i != row {
            let factor = t[i][col];
            if factor != 0.0 {
                for j in 0..width {
                    let delta = factor * t[row][j];
                    t[i][j] -= delta;
                }
            }
        }
    }
}
