//! Log-domain Sinkhorn iterations with epsilon scaling.
//!
//! Small regularization strengths make the plain Gibbs kernel underflow and
//! the iteration crawl, so potentials are kept in the log domain and the
//! target epsilon is approached through a geometric schedule, warm-starting
//! the potentials at each stage.

use crate::error::{Error, Result};
use crate::num::log_sum_exp;

const MAX_ITERATIONS: usize = 100_000;
const TARGET_TOL: f64 = 1e-9;

/// Entropic potentials and dual value of a converged Sinkhorn run.
#[derive(Debug, Clone)]
pub struct Potentials {
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    /// Dual objective `<f, a> + <g, b>`; the gradient of the entropic cost
    /// with respect to the first marginal is `f` up to an additive constant.
    pub dual_value: f64,
}

/// Sinkhorn with warm-started potentials and a caller-chosen marginal
/// tolerance. Zero-mass entries in `a`/`b` are handled through the log
/// domain. Used by the barycenter descent, which re-solves slowly changing
/// problems.
pub fn solve_potentials(
    a: &[f64],
    b: &[f64],
    cost: &[Vec<f64>],
    epsilon: f64,
    warm: Option<(&[f64], &[f64])>,
    tol: f64,
) -> Result<Potentials> {
    let m = a.len();
    let n = b.len();
    let log_a: Vec<f64> = a.iter().map(|&x| x.ln()).collect();
    let log_b: Vec<f64> = b.iter().map(|&x| x.ln()).collect();
    let mut f = warm.map(|(f0, _)| f0.to_vec()).unwrap_or(vec![0.0; m]);
    let mut g = warm.map(|(_, g0)| g0.to_vec()).unwrap_or(vec![0.0; n]);
    let mut scratch = vec![0.0f64; m.max(n)];
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_ITERATIONS {
        for i in 0..m {
            if a[i] == 0.0 {
                f[i] = 0.0;
                continue;
            }
            for j in 0..n {
                scratch[j] = (g[j] - cost[i][j]) / epsilon + log_b[j];
            }
            f[i] = -epsilon * log_sum_exp(&scratch[..n]);
        }
        residual = 0.0;
        for j in 0..n {
            if b[j] == 0.0 {
                g[j] = 0.0;
                continue;
            }
            for i in 0..m {
                scratch[i] = (f[i] - cost[i][j]) / epsilon + log_a[i];
            }
            let new_g = -epsilon * log_sum_exp(&scratch[..m]);
            // Column violation implied by the pending update.
            residual = residual.max(b[j] * ((g[j] - new_g) / epsilon).exp_m1().abs());
            g[j] = new_g;
        }
        if residual < tol {
            let dual_value = f
                .iter()
                .zip(a)
                .map(|(x, w)| x * w)
                .chain(g.iter().zip(b).map(|(x, w)| x * w))
                .sum();
            return Ok(Potentials { f, g, dual_value });
        }
    }
    Err(Error::NonConvergence {
        what: "sinkhorn potentials",
        iterations: MAX_ITERATIONS,
        residual,
        trace: vec![],
    })
}

pub fn solve(a: &[f64], b: &[f64], cost: &[Vec<f64>], epsilon: f64) -> Result<Vec<f64>> {
    let m = a.len();
    let n = b.len();
    let log_a: Vec<f64> = a.iter().map(|&x| x.ln()).collect();
    let log_b: Vec<f64> = b.iter().map(|&x| x.ln()).collect();

    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for row in cost {
        for &c in row {
            lo = lo.min(c);
            hi = hi.max(c);
        }
    }
    let spread = (hi - lo).max(1e-9);

    // Epsilon schedule: start near the cost spread, divide by 4 down to the
    // target epsilon.
    let mut schedule = Vec::new();
    let mut e = (spread / 2.0).max(epsilon);
    while e > epsilon * 1.000_001 {
        schedule.push(e);
        e /= 4.0;
    }
    schedule.push(epsilon);

    let mut f = vec![0.0f64; m];
    let mut g = vec![0.0f64; n];
    let mut scratch = vec![0.0f64; m.max(n)];
    let mut iterations = 0usize;
    let mut residual = f64::INFINITY;

    for (stage, &eps) in schedule.iter().enumerate() {
        let stage_tol = if stage + 1 == schedule.len() {
            TARGET_TOL
        } else {
            1e-4
        };
        loop {
            if iterations >= MAX_ITERATIONS {
                return Err(Error::NonConvergence {
                    what: "sinkhorn",
                    iterations,
                    residual,
                    trace: vec![],
                });
            }
            iterations += 1;

            // f-update makes row marginals exact for the current g.
            for i in 0..m {
                for j in 0..n {
                    scratch[j] = (g[j] - cost[i][j]) / eps + log_b[j];
                }
                f[i] = -eps * log_sum_exp(&scratch[..n]);
            }
            // g-update makes column marginals exact for the current f.
            for j in 0..n {
                for i in 0..m {
                    scratch[i] = (f[i] - cost[i][j]) / eps + log_a[i];
                }
                g[j] = -eps * log_sum_exp(&scratch[..m]);
            }
            // Row violation of the plan induced by (f, g).
            residual = 0.0f64;
            for i in 0..m {
                for j in 0..n {
                    scratch[j] = (g[j] - cost[i][j]) / eps + log_b[j];
                }
                let row_sum = a[i] * ((f[i] / eps + log_sum_exp(&scratch[..n])).exp());
                residual = residual.max((row_sum - a[i]).abs());
            }
            if residual < stage_tol {
                break;
            }
        }
    }

    // Final f-update so rows are exact, then assemble the plan.
    let eps = epsilon;
    for i in 0..m {
        for j in 0..n {
            scratch[j] = (g[j] - cost[i][j]) / eps + log_b[j];
        }
        f[i] = -eps * log_sum_exp(&scratch[..n]);
    }
    let mut plan = vec![0.0f64; m * n];
    for i in 0..m {
        for j in 0..n {
            plan[i * n + j] = ((f[i] + g[j] - cost[i][j]) / eps + log_a[i] + log_b[j]).exp();
        }
    }
    // Column violation must sit within the plan tolerance.
    let mut col_violation = 0.0f64;
    for j in 0..n {
        let s: f64 = (0..m).map(|i| plan[i * n + j]).sum();
        col_violation = col_violation.max((s - b[j]).abs());
    }
    if col_violation > 1e-8 {
        return Err(Error::NonConvergence {
            what: "sinkhorn",
            iterations,
            residual: col_violation,
            trace: vec![],
        });
    }
    Ok(plan)
}
