//! Discrete optimal transport: exact plans via an in-repo network simplex,
//! entropic plans via log-domain Sinkhorn, barycentric Monge maps, and map
//! inversion. A Hungarian assignment solver is exposed as an independent
//! reference used by the test suite.

pub mod hungarian;
mod network_simplex;
pub(crate) mod sinkhorn;

use crate::error::{Error, Result};
use crate::measure::{DiscreteMeasure, Point, MERGE_TOL};
use crate::num::{dist, kahan_sum, sq_dist};
use serde::{Deserialize, Serialize};

/// Desk-scale cap on support sizes for exact solves.
pub const MAX_SUPPORT: usize = 512;

/// Marginal tolerance for transport plans.
pub const MARGINAL_TOL: f64 = 1e-8;

/// Ground cost between support points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CostSpec {
    /// |x - y|^2
    Quadratic,
    /// |x - y|
    Absolute,
    /// Explicit nonnegative matrix indexed by (source, target).
    Tabulated { matrix: Vec<Vec<f64>> },
}

impl CostSpec {
    /// Dense cost matrix for the given supports.
    pub fn matrix(&self, rows: &[Point], cols: &[Point]) -> Result<Vec<Vec<f64>>> {
        match self {
            CostSpec::Quadratic => Ok(rows
                .iter()
                .map(|x| cols.iter().map(|y| sq_dist(&x.0, &y.0)).collect())
                .collect()),
            CostSpec::Absolute => Ok(rows
                .iter()
                .map(|x| cols.iter().map(|y| dist(&x.0, &y.0)).collect())
                .collect()),
            CostSpec::Tabulated { matrix } => {
                if matrix.len() != rows.len()
                    || matrix.iter().any(|r| r.len() != cols.len())
                {
                    return Err(Error::LengthMismatch(
                        "tabulated cost matrix does not match the supports".into(),
                    ));
                }
                if matrix
                    .iter()
                    .any(|r| r.iter().any(|&c| !c.is_finite() || c < 0.0))
                {
                    return Err(Error::NonFinite("tabulated cost entry"));
                }
                Ok(matrix.clone())
            }
        }
    }
}

/// A coupling between two discrete measures.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    rows: Vec<Point>,
    cols: Vec<Point>,
    row_weights: Vec<f64>,
    col_weights: Vec<f64>,
    /// Row-major m×n mass matrix.
    matrix: Vec<f64>,
    cost: f64,
    marginals_relaxed: bool,
}

impl TransportPlan {
    pub fn new(
        rows: Vec<Point>,
        cols: Vec<Point>,
        row_weights: Vec<f64>,
        col_weights: Vec<f64>,
        matrix: Vec<f64>,
        cost: f64,
        marginals_relaxed: bool,
    ) -> Result<Self> {
        let (m, n) = (rows.len(), cols.len());
        if matrix.len() != m * n {
            return Err(Error::LengthMismatch(format!(
                "{} entries for a {m}x{n} plan",
                matrix.len()
            )));
        }
        if matrix.iter().any(|&x| !x.is_finite() || x < -1e-15) {
            return Err(Error::NonFinite("plan entry"));
        }
        let plan = TransportPlan {
            rows,
            cols,
            row_weights,
            col_weights,
            matrix: matrix.into_iter().map(|x| x.max(0.0)).collect(),
            cost,
            marginals_relaxed,
        };
        plan.validate()?;
        Ok(plan)
    }

    fn validate(&self) -> Result<()> {
        if self.marginals_relaxed {
            let total = kahan_sum(self.matrix.iter().cloned());
            if (total - 1.0).abs() > MARGINAL_TOL {
                return Err(Error::Internal(format!(
                    "relaxed plan total mass {total} deviates from 1"
                )));
            }
            return Ok(());
        }
        for (i, &a) in self.row_weights.iter().enumerate() {
            let s = kahan_sum(self.row(i).iter().cloned());
            if (s - a).abs() > MARGINAL_TOL {
                return Err(Error::Internal(format!(
                    "row {i} sums to {s}, expected {a}"
                )));
            }
        }
        for (j, &b) in self.col_weights.iter().enumerate() {
            let s = kahan_sum((0..self.rows.len()).map(|i| self.entry(i, j)));
            if (s - b).abs() > MARGINAL_TOL {
                return Err(Error::Internal(format!(
                    "column {j} sums to {s}, expected {b}"
                )));
            }
        }
        Ok(())
    }

    pub fn rows(&self) -> &[Point] {
        &self.rows
    }

    pub fn cols(&self) -> &[Point] {
        &self.cols
    }

    pub fn row_weights(&self) -> &[f64] {
        &self.row_weights
    }

    pub fn col_weights(&self) -> &[f64] {
        &self.col_weights
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.cols.len() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.cols.len();
        &self.matrix[i * n..(i + 1) * n]
    }

    pub fn cost(&self) -> f64 {
        self.cost
    }

    pub fn marginals_relaxed(&self) -> bool {
        self.marginals_relaxed
    }

    /// True when every row has a single nonzero entry (1e-9 relative).
    pub fn is_deterministic(&self) -> bool {
        (0..self.rows.len()).all(|i| {
            let row = self.row(i);
            let total: f64 = row.iter().sum();
            if total <= 0.0 {
                return false;
            }
            row.iter().filter(|&&x| x > 1e-9 * total).count() == 1
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let triplets: Vec<(usize, usize, f64)> = (0..self.rows.len())
            .flat_map(|i| {
                (0..self.cols.len())
                    .filter(move |&j| self.entry(i, j) > 0.0)
                    .map(move |j| (i, j, self.entry(i, j)))
            })
            .collect();
        let json = PlanJson {
            rows: self.rows.clone(),
            cols: self.cols.clone(),
            row_weights: self.row_weights.clone(),
            col_weights: self.col_weights.clone(),
            triplets,
            cost: self.cost,
            flags: PlanFlags {
                marginals_relaxed: self.marginals_relaxed,
            },
        };
        Ok(serde_json::to_string_pretty(&json)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let json: PlanJson = serde_json::from_str(text)?;
        let (m, n) = (json.rows.len(), json.cols.len());
        let mut matrix = vec![0.0; m * n];
        for (i, j, x) in json.triplets {
            if i >= m || j >= n {
                return Err(Error::LengthMismatch("triplet index out of range".into()));
            }
            matrix[i * n + j] = x;
        }
        TransportPlan::new(
            json.rows,
            json.cols,
            json.row_weights,
            json.col_weights,
            matrix,
            json.cost,
            json.flags.marginals_relaxed,
        )
    }
}

#[derive(Serialize, Deserialize)]
struct PlanFlags {
    marginals_relaxed: bool,
}

#[derive(Serialize, Deserialize)]
struct PlanJson {
    rows: Vec<Point>,
    cols: Vec<Point>,
    row_weights: Vec<f64>,
    col_weights: Vec<f64>,
    triplets: Vec<(usize, usize, f64)>,
    cost: f64,
    flags: PlanFlags,
}

/// A (possibly barycentric) Monge map between discrete supports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportMap {
    pub source: Vec<Point>,
    pub images: Vec<Point>,
    pub deterministic: bool,
    pub approximate_inverse: bool,
}

impl TransportMap {
    /// Image of the source atom nearest to `x` (1-nearest-atom extension).
    pub fn apply_nearest(&self, x: &[f64]) -> &Point {
        let k = self
            .source
            .iter()
            .enumerate()
            .min_by(|(_, p), (_, q)| {
                sq_dist(&p.0, x)
                    .partial_cmp(&sq_dist(&q.0, x))
                    .expect("finite distances")
            })
            .map(|(k, _)| k)
            .expect("nonempty map");
        &self.images[k]
    }
}

/// Exact optimal transport between two discrete measures.
///
/// Solved by a bipartite network simplex; for equal-size uniform marginals
/// the optimal basic solution is a permutation (Birkhoff) and matches the
/// Hungarian assignment cost.
pub fn solve_exact_ot(
    a: &DiscreteMeasure,
    b: &DiscreteMeasure,
    cost: &CostSpec,
) -> Result<TransportPlan> {
    if a.len() > MAX_SUPPORT || b.len() > MAX_SUPPORT {
        return Err(Error::SizeLimit {
            size: a.len().max(b.len()),
            limit: MAX_SUPPORT,
        });
    }
    let c = cost.matrix(a.support(), b.support())?;
    let flow = network_simplex::solve(a.weights(), b.weights(), &c)?;
    let total_cost = kahan_sum(
        flow.iter()
            .enumerate()
            .map(|(k, &x)| x * c[k / b.len()][k % b.len()]),
    );
    TransportPlan::new(
        a.support().to_vec(),
        b.support().to_vec(),
        a.weights().to_vec(),
        b.weights().to_vec(),
        flow,
        total_cost,
        false,
    )
}

/// Entropic-regularized transport plan (log-domain Sinkhorn with epsilon
/// scaling). The returned cost is the transport part `<C, pi>` only.
pub fn solve_sinkhorn(
    a: &DiscreteMeasure,
    b: &DiscreteMeasure,
    cost: &CostSpec,
    epsilon: f64,
) -> Result<TransportPlan> {
    if epsilon <= 0.0 {
        return Err(Error::InvalidConfig("epsilon must be positive".into()));
    }
    let c = cost.matrix(a.support(), b.support())?;
    let plan = sinkhorn::solve(a.weights(), b.weights(), &c, epsilon)?;
    let total_cost = kahan_sum(
        plan.iter()
            .enumerate()
            .map(|(k, &x)| x * c[k / b.len()][k % b.len()]),
    );
    TransportPlan::new(
        a.support().to_vec(),
        b.support().to_vec(),
        a.weights().to_vec(),
        b.weights().to_vec(),
        plan,
        total_cost,
        false,
    )
}

/// Barycentric projection of a plan: `T(x_i) = sum_j pi_ij y_j / sum_j pi_ij`.
pub fn barycentric_map(plan: &TransportPlan) -> Result<TransportMap> {
    let dim = plan.cols[0].dim();
    let mut images = Vec::with_capacity(plan.rows.len());
    for i in 0..plan.rows.len() {
        let row = plan.row(i);
        let total: f64 = row.iter().sum();
        if total <= 0.0 {
            return Err(Error::ZeroRow(i));
        }
        let mut img = vec![0.0; dim];
        for (j, &mass) in row.iter().enumerate() {
            if mass > 0.0 {
                for (acc, &y) in img.iter_mut().zip(&plan.cols[j].0) {
                    *acc += mass * y;
                }
            }
        }
        for v in &mut img {
            *v /= total;
        }
        images.push(Point(img));
    }
    Ok(TransportMap {
        source: plan.rows.clone(),
        images,
        deterministic: plan.is_deterministic(),
        approximate_inverse: false,
    })
}

/// Invert a transport map. Bijections on atoms invert exactly; otherwise the
/// reverse-direction plan supplied by `fallback` is projected to a barycentric
/// map and the result is flagged `approximate_inverse`.
pub fn invert_map(
    map: &TransportMap,
    fallback: impl FnOnce() -> Result<TransportPlan>,
) -> Result<TransportMap> {
    let injective = map.deterministic && {
        let mut ok = true;
        'outer: for (k, p) in map.images.iter().enumerate() {
            for q in &map.images[k + 1..] {
                if p.0
                    .iter()
                    .zip(&q.0)
                    .all(|(x, y)| (x - y).abs() <= MERGE_TOL)
                {
                    ok = false;
                    break 'outer;
                }
            }
        }
        ok
    };
    if injective {
        return Ok(TransportMap {
            source: map.images.clone(),
            images: map.source.clone(),
            deterministic: true,
            approximate_inverse: false,
        });
    }
    let reverse = fallback()?;
    let mut inv = barycentric_map(&reverse)?;
    inv.approximate_inverse = true;
    Ok(inv)
}
