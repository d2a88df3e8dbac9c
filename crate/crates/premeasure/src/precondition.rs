//! Pre-conditioned measures built from a sample: the empirical measure, the
//! histogram, Parzen-window kernel estimates, the uniform measure on the
//! convex hull, Wasserstein and entropic barycenters, class barycenters, and
//! MMD-relaxed transport plans.
//!
//! Builders act on the sample's joint points when labels are present and on
//! the bare features otherwise, so the same pre-conditioner serves marginal
//! and joint estimation.

use crate::error::{Error, Result};
use crate::measure::{DiscreteMeasure, GridDensity, GridSpec, Measure, Point, Sample};
use crate::metrics::MmdKernel;
use crate::num::{kahan_sum, normal_cdf, sq_dist};
use crate::transport::{sinkhorn, CostSpec};
use serde::{Deserialize, Serialize};

/// Required captured mass when a density is represented on a grid.
pub const MIN_CAPTURED_MASS: f64 = 0.999;

/// Smoothing kernel families for density estimation. Each kernel integrates
/// to one and is nonnegative; multivariate smoothing uses the product form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    Gaussian,
    Epanechnikov,
    Uniform,
}

impl Kernel {
    /// 1-D CDF of the standardized kernel.
    fn cdf(self, u: f64) -> f64 {
        match self {
            Kernel::Gaussian => normal_cdf(u),
            Kernel::Epanechnikov => {
                if u <= -1.0 {
                    0.0
                } else if u >= 1.0 {
                    1.0
                } else {
                    0.25 * (2.0 + 3.0 * u - u * u * u)
                }
            }
            Kernel::Uniform => ((u + 1.0) / 2.0).clamp(0.0, 1.0),
        }
    }

    /// 1-D density of the standardized kernel.
    pub fn density(self, u: f64) -> f64 {
        match self {
            Kernel::Gaussian => crate::num::normal_pdf(u),
            Kernel::Epanechnikov => {
                if u.abs() >= 1.0 {
                    0.0
                } else {
                    0.75 * (1.0 - u * u)
                }
            }
            Kernel::Uniform => {
                if u.abs() > 1.0 {
                    0.0
                } else {
                    0.5
                }
            }
        }
    }
}

/// Bandwidth selection: a fixed width or the power law `H_n = c n^(-alpha)`.
/// The exponent is confined to (0, 1) so that `H_n -> 0` and `n H_n -> inf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum BandwidthRule {
    Fixed { h: f64 },
    PowerLaw { c: f64, alpha: f64 },
}

impl BandwidthRule {
    pub fn validate(&self) -> Result<()> {
        match self {
            BandwidthRule::Fixed { h } if *h > 0.0 => Ok(()),
            BandwidthRule::PowerLaw { c, alpha } if *c > 0.0 && *alpha > 0.0 && *alpha < 1.0 => {
                Ok(())
            }
            _ => Err(Error::InvalidConfig(
                "bandwidth rule requires h > 0 or c > 0, 0 < alpha < 1".into(),
            )),
        }
    }

    pub fn bandwidth(&self, n: usize) -> f64 {
        match self {
            BandwidthRule::Fixed { h } => *h,
            BandwidthRule::PowerLaw { c, alpha } => c * (n as f64).powf(-alpha),
        }
    }
}

/// Configuration of entropic regularization toward a reference measure.
#[derive(Debug, Clone)]
pub struct EntropicConfig {
    reference: GridDensity,
    entropy_weight: f64,
}

impl EntropicConfig {
    /// The reference must be strictly positive on its box.
    pub fn new(reference: GridDensity, entropy_weight: f64) -> Result<Self> {
        if entropy_weight <= 0.0 {
            return Err(Error::InvalidConfig(
                "entropy weight must be positive".into(),
            ));
        }
        if reference.values().iter().any(|&v| v <= 0.0) {
            return Err(Error::InvalidConfig(
                "entropic reference must be strictly positive on its box".into(),
            ));
        }
        Ok(EntropicConfig {
            reference,
            entropy_weight,
        })
    }

    pub fn reference(&self) -> &GridDensity {
        &self.reference
    }

    pub fn entropy_weight(&self) -> f64 {
        self.entropy_weight
    }
}

/// Configuration for the MMD-relaxed transport plan.
#[derive(Debug, Clone)]
pub struct MmdPlanConfig {
    pub kernel: MmdKernel,
    pub lambda1: f64,
    pub lambda2: f64,
    pub cost: CostSpec,
}

impl MmdPlanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda1 < 0.0 || self.lambda2 < 0.0 {
            return Err(Error::InvalidConfig("penalties must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Points a pre-conditioner estimates from: joint (feature, label) points
/// when labels are present, bare features otherwise.
pub fn active_points(s: &Sample) -> Result<Vec<Point>> {
    if s.labels.is_some() {
        s.joint_points()
    } else {
        Ok(s.features.clone())
    }
}

/// The standard empirical measure: weight 1/n per draw, duplicates merged.
pub fn build_empirical(s: &Sample) -> Result<Measure> {
    if s.is_empty() {
        return Err(Error::EmptyInput("sample"));
    }
    Ok(Measure::Discrete(DiscreteMeasure::new(
        active_points(s)?,
        None,
    )?))
}

/// Histogram measure over a grid of bins: piecewise constant with density
/// `(count in bin / n) / volume(bin)`. Errors if any point falls outside.
pub fn build_histogram(s: &Sample, bins: &GridSpec) -> Result<Measure> {
    if s.is_empty() {
        return Err(Error::EmptyInput("sample"));
    }
    let points = active_points(s)?;
    if points[0].dim() != bins.dim() {
        return Err(Error::DimensionMismatch {
            expected: points[0].dim(),
            got: bins.dim(),
        });
    }
    let mut counts = vec![0usize; bins.cell_count()];
    for (index, p) in points.iter().enumerate() {
        match bins.locate(&p.0) {
            Some(k) => counts[k] += 1,
            None => return Err(Error::PointOutsideBins { index }),
        }
    }
    let n = points.len() as f64;
    let vol = bins.cell_volume();
    let values: Vec<f64> = counts.iter().map(|&c| c as f64 / n / vol).collect();
    Ok(Measure::Grid(GridDensity::normalized(bins.clone(), values)?))
}

/// Parzen-window kernel density estimate on a grid:
/// `f(x) = (1 / (n H^p)) sum_i K((x - X_i) / H)`.
///
/// Every grid cell carries the exact kernel mass assigned to it (product of
/// 1-D kernel CDF increments), so bandwidths below the cell width remain
/// faithfully represented and the captured-mass check stays meaningful.
pub fn build_kde(
    s: &Sample,
    kernel: Kernel,
    bw: &BandwidthRule,
    grid: &GridSpec,
) -> Result<Measure> {
    if s.is_empty() {
        return Err(Error::EmptyInput("sample"));
    }
    bw.validate()?;
    let points = active_points(s)?;
    let h = bw.bandwidth(points.len());
    smooth_onto_grid(&points, None, h, kernel, grid)
}

/// Shared smoothing core: represent `sum_i w_i K_h(. - X_i)` on a grid by
/// exact per-cell kernel mass.
pub(crate) fn smooth_onto_grid(
    points: &[Point],
    weights: Option<&[f64]>,
    h: f64,
    kernel: Kernel,
    grid: &GridSpec,
) -> Result<Measure> {
    if h <= 0.0 {
        return Err(Error::InvalidConfig("bandwidth must be positive".into()));
    }
    let dim = points[0].dim();
    if grid.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: grid.dim(),
        });
    }
    let res = &grid.resolution;
    let widths = grid.cell_widths();
    let vol = grid.cell_volume();
    let n = points.len() as f64;
    let mut masses = vec![0.0f64; grid.cell_count()];
    for (k, p) in points.iter().enumerate() {
        let w = weights.map_or(1.0 / n, |ws| ws[k]);
        let mut axis_cdf: Vec<Vec<f64>> = Vec::with_capacity(dim);
        for a in 0..dim {
            let lo = grid.bounds[a].0;
            let mut col = Vec::with_capacity(res[a]);
            let mut prev = kernel.cdf((lo - p.0[a]) / h);
            for i in 0..res[a] {
                let edge = lo + (i as f64 + 1.0) * widths[a];
                let next = kernel.cdf((edge - p.0[a]) / h);
                col.push((next - prev).max(0.0));
                prev = next;
            }
            axis_cdf.push(col);
        }
        for (flat, mass) in masses.iter_mut().enumerate() {
            let idx = grid.unravel(flat);
            let mut cell = w;
            for a in 0..dim {
                cell *= axis_cdf[a][idx[a]];
                if cell == 0.0 {
                    break;
                }
            }
            *mass += cell;
        }
    }
    let captured = kahan_sum(masses.iter().cloned());
    if captured < MIN_CAPTURED_MASS {
        return Err(Error::GridTooSmall { captured });
    }
    let values: Vec<f64> = masses.into_iter().map(|m| m / vol).collect();
    Ok(Measure::Grid(GridDensity::normalized(grid.clone(), values)?))
}

/// Uniform measure on the convex hull of the sample (dimension 1 or 2).
/// Cells cut by the hull boundary receive a fractional value estimated from
/// a 4x4 sub-sample per cell. Degenerate hulls are an error, not widened.
pub fn build_convex_hull_uniform(s: &Sample, resolution: usize) -> Result<Measure> {
    if s.is_empty() {
        return Err(Error::EmptyInput("sample"));
    }
    let points = &s.features;
    match points[0].dim() {
        1 => {
            let xs: Vec<f64> = points.iter().map(|p| p.0[0]).collect();
            let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if hi - lo <= 1e-12 {
                return Err(Error::DegenerateHull { dim: 1 });
            }
            let spec = GridSpec::new(vec![(lo, hi)], vec![resolution])?;
            Ok(Measure::Grid(GridDensity::normalized(
                spec,
                vec![1.0; resolution],
            )?))
        }
        2 => {
            let hull = convex_hull_2d(points);
            let area = polygon_area(&hull);
            let scale: f64 = points
                .iter()
                .flat_map(|p| p.0.iter())
                .fold(1.0f64, |m, &c| m.max(c.abs()));
            if hull.len() < 3 || area <= 1e-12 * scale * scale {
                return Err(Error::DegenerateHull { dim: 2 });
            }
            let (mut lo_x, mut hi_x) = (f64::INFINITY, f64::NEG_INFINITY);
            let (mut lo_y, mut hi_y) = (f64::INFINITY, f64::NEG_INFINITY);
            for p in &hull {
                lo_x = lo_x.min(p[0]);
                hi_x = hi_x.max(p[0]);
                lo_y = lo_y.min(p[1]);
                hi_y = hi_y.max(p[1]);
            }
            let spec = GridSpec::new(
                vec![(lo_x, hi_x), (lo_y, hi_y)],
                vec![resolution, resolution],
            )?;
            let mut values = vec![0.0f64; spec.cell_count()];
            for (k, v) in values.iter_mut().enumerate() {
                let edges = spec.cell_edges(k);
                let mut inside = 0usize;
                for sx in 0..4 {
                    for sy in 0..4 {
                        let x = edges[0].0 + (edges[0].1 - edges[0].0) * (sx as f64 + 0.5) / 4.0;
                        let y = edges[1].0 + (edges[1].1 - edges[1].0) * (sy as f64 + 0.5) / 4.0;
                        if point_in_convex_polygon(&hull, x, y) {
                            inside += 1;
                        }
                    }
                }
                *v = inside as f64 / 16.0 / area;
            }
            Ok(Measure::Grid(GridDensity::normalized(spec, values)?))
        }
        d => Err(Error::DimensionMismatch {
            expected: 2,
            got: d,
        }),
    }
}

/// Andrew's monotone chain; returns the hull in counter-clockwise order.
fn convex_hull_2d(points: &[Point]) -> Vec<[f64; 2]> {
    let mut pts: Vec<[f64; 2]> = points.iter().map(|p| [p.0[0], p.0[1]]).collect();
    pts.sort_by(|a, b| a.partial_cmp(b).expect("finite points"));
    pts.dedup_by(|a, b| a == b);
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: &[f64; 2], a: &[f64; 2], b: &[f64; 2]| {
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    };
    let mut lower: Vec<[f64; 2]> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2
            && cross(&lower[lower.len() - 2], &lower[lower.len() - 1], &p) <= 0.0
        {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<[f64; 2]> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2
            && cross(&upper[upper.len() - 2], &upper[upper.len() - 1], &p) <= 0.0
        {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn polygon_area(hull: &[[f64; 2]]) -> f64 {
    if hull.len() < 3 {
        return 0.0;
    }
    let mut twice = 0.0;
    for i in 0..hull.len() {
        let j = (i + 1) % hull.len();
        twice += hull[i][0] * hull[j][1] - hull[j][0] * hull[i][1];
    }
    0.5 * twice.abs()
}

fn point_in_convex_polygon(hull: &[[f64; 2]], x: f64, y: f64) -> bool {
    for i in 0..hull.len() {
        let j = (i + 1) % hull.len();
        let cross = (hull[j][0] - hull[i][0]) * (y - hull[i][1])
            - (hull[j][1] - hull[i][1]) * (x - hull[i][0]);
        if cross < -1e-12 {
            return false;
        }
    }
    true
}

/// 2-Wasserstein barycenter of a Dirac sample. The objective
/// `sum_k d_2(rho, delta_{X_k})^2` is linear in `rho` with integrand
/// `sum_k |y - X_k|^2`, so a minimizer is the Dirac at the sample mean;
/// the closed form is returned and a lattice grid-search oracle lives in the
/// test suite.
pub fn build_wasserstein_barycenter(s: &Sample) -> Result<Measure> {
    if s.is_empty() {
        return Err(Error::EmptyInput("sample"));
    }
    let points = active_points(s)?;
    let dim = points[0].dim();
    let mut mean = vec![0.0; dim];
    for p in &points {
        for (acc, &c) in mean.iter_mut().zip(&p.0) {
            *acc += c;
        }
    }
    for c in &mut mean {
        *c /= points.len() as f64;
    }
    Ok(Measure::Discrete(DiscreteMeasure::new(
        vec![Point::new(mean)?],
        None,
    )?))
}

/// Entropically regularized barycenter of a Dirac sample: the minimizer of
/// `(1/n) sum_k d_2(rho, delta_{X_k})^2 + lambda Ent(rho | nu)` is the Gibbs
/// density `d rho / d nu = exp(-V / lambda) / Z` with
/// `V(y) = (1/n) sum_k |y - X_k|^2`. Computed in closed form on the
/// reference grid; zero wherever the reference is zero.
pub fn build_entropic_barycenter(s: &Sample, cfg: &EntropicConfig) -> Result<Measure> {
    if s.is_empty() {
        return Err(Error::EmptyInput("sample"));
    }
    let points = active_points(s)?;
    let spec = cfg.reference().spec();
    if spec.dim() != points[0].dim() {
        return Err(Error::DimensionMismatch {
            expected: points[0].dim(),
            got: spec.dim(),
        });
    }
    let v = dirac_potential(&points, spec);
    let lambda = cfg.entropy_weight();
    let nu = cfg.reference().values();
    let mut raw = Vec::with_capacity(nu.len());
    for (k, &nu_k) in nu.iter().enumerate() {
        if nu_k == 0.0 {
            raw.push(0.0);
        } else {
            raw.push(nu_k * (-v[k] / lambda).exp());
        }
    }
    let z = kahan_sum(raw.iter().map(|r| r * spec.cell_volume()));
    if z <= 0.0 || !z.is_finite() {
        return Err(Error::PartitionUnderflow);
    }
    Ok(Measure::Grid(GridDensity::normalized(spec.clone(), raw)?))
}

/// `V(y) = (1/n) sum_k |y - X_k|^2` evaluated at cell centers.
pub fn dirac_potential(points: &[Point], spec: &GridSpec) -> Vec<f64> {
    let n = points.len() as f64;
    (0..spec.cell_count())
        .map(|k| {
            let y = spec.cell_center(k);
            points.iter().map(|p| sq_dist(&y.0, &p.0)).sum::<f64>() / n
        })
        .collect()
}

/// First variation `V + lambda (log(d rho / d nu) + 1)` of the entropic
/// barycenter objective at `rho`, per cell. Cells outside the support of
/// `rho` report `+inf`, consistent with the optimality criterion: constant
/// on the support, no smaller elsewhere.
pub fn entropic_first_variation(
    rho: &GridDensity,
    s: &Sample,
    cfg: &EntropicConfig,
) -> Result<Vec<f64>> {
    let points = active_points(s)?;
    let spec = cfg.reference().spec();
    if rho.spec() != spec {
        return Err(Error::BadGrid(
            "first variation requires the reference grid".into(),
        ));
    }
    let v = dirac_potential(&points, spec);
    let lambda = cfg.entropy_weight();
    let nu = cfg.reference().values();
    Ok(rho
        .values()
        .iter()
        .enumerate()
        .map(|(k, &r)| {
            if r <= 0.0 || nu[k] <= 0.0 {
                f64::INFINITY
            } else {
                v[k] + lambda * ((r / nu[k]).ln() + 1.0)
            }
        })
        .collect())
}

/// Rule for constructing the per-class measures of a class barycenter.
#[derive(Debug, Clone)]
pub enum PerClassRule {
    Kde { kernel: Kernel, bw: BandwidthRule },
    Entropic,
}

/// Output of the class-barycenter descent; the Sinkhorn regularization used
/// for the Wasserstein gradients is reported alongside the measure.
#[derive(Debug, Clone)]
pub struct ClassBarycenter {
    pub measure: Measure,
    pub epsilon: f64,
    pub iterations: usize,
    pub objective_trace: Vec<f64>,
}

const CLASS_BARY_MAX_ITER: usize = 2000;
const CLASS_BARY_OBJ_TOL: f64 = 1e-8;

/// Class-based barycenter: minimizes
/// `(1/m) sum_k d_2(rho, nu_k)^2 + lambda Ent(rho | nu)` over densities on
/// the reference grid by exponentiated gradient descent. The squared
/// Wasserstein terms use debiased entropic-transport (Sinkhorn divergence)
/// gradients with `epsilon = 0.01 (grid diameter)^2`, which makes
/// `nu_k = nu` an exact fixed point. Descent stops once the objective
/// decrease falls below 1e-8, or errs after 2000 iterations.
pub fn build_class_barycenter(
    s: &Sample,
    per_class: &PerClassRule,
    cfg: &EntropicConfig,
) -> Result<ClassBarycenter> {
    let class_measures = per_class_measures(s, per_class, cfg)?;
    build_class_barycenter_from(&class_measures, cfg)
}

/// Per-class measures `nu_k` on the shared reference grid.
pub fn per_class_measures(
    s: &Sample,
    per_class: &PerClassRule,
    cfg: &EntropicConfig,
) -> Result<Vec<GridDensity>> {
    let groups: Vec<Vec<usize>> = if let Some(classes) = &s.classes {
        classes.clone()
    } else {
        s.classes_from_labels()?
            .into_iter()
            .map(|(_, idx)| idx)
            .collect()
    };
    if groups.is_empty() {
        return Err(Error::EmptyInput("classes"));
    }
    let spec = cfg.reference().spec();
    let mut out = Vec::with_capacity(groups.len());
    for idx in &groups {
        let features: Vec<Point> = idx.iter().map(|&i| s.features[i].clone()).collect();
        let class_sample = Sample::new(features)?;
        let m = match per_class {
            PerClassRule::Kde { kernel, bw } => build_kde(&class_sample, *kernel, bw, spec)?,
            PerClassRule::Entropic => build_entropic_barycenter(&class_sample, cfg)?,
        };
        match m {
            Measure::Grid(g) => out.push(g),
            Measure::Discrete(_) => {
                return Err(Error::Internal("per-class measure must be a grid".into()))
            }
        }
    }
    Ok(out)
}

/// Class barycenter from explicit per-class grid measures.
pub fn build_class_barycenter_from(
    class_measures: &[GridDensity],
    cfg: &EntropicConfig,
) -> Result<ClassBarycenter> {
    let spec = cfg.reference().spec().clone();
    for g in class_measures {
        if g.spec() != &spec {
            return Err(Error::BadGrid(
                "class measures must share the reference grid".into(),
            ));
        }
    }
    let epsilon = class_bary_epsilon(&spec);
    let lambda = cfg.entropy_weight();
    let vol = spec.cell_volume();
    let centers: Vec<Point> = (0..spec.cell_count()).map(|k| spec.cell_center(k)).collect();
    let cost = CostSpec::Quadratic.matrix(&centers, &centers)?;

    let nu_mass: Vec<f64> = cfg.reference().values().iter().map(|v| v * vol).collect();
    let class_mass: Vec<Vec<f64>> = class_measures
        .iter()
        .map(|g| g.values().iter().map(|v| v * vol).collect())
        .collect();

    // Self-transport terms of the Sinkhorn divergence for the fixed nu_k.
    let mut class_self = Vec::with_capacity(class_mass.len());
    for b in &class_mass {
        let pot = sinkhorn::solve_potentials(b, b, &cost, epsilon, None, 1e-7)?;
        class_self.push(pot.dual_value);
    }

    let m = class_mass.len() as f64;
    let mut rho = nu_mass.clone();
    let mut warm_cross: Vec<Option<(Vec<f64>, Vec<f64>)>> = vec![None; class_mass.len()];
    let mut warm_self: Option<(Vec<f64>, Vec<f64>)> = None;

    let objective_and_grad = |rho: &[f64],
                              warm_cross: &mut Vec<Option<(Vec<f64>, Vec<f64>)>>,
                              warm_self: &mut Option<(Vec<f64>, Vec<f64>)>|
     -> Result<(f64, Vec<f64>)> {
        let self_pot = {
            let warm = warm_self
                .as_ref()
                .map(|(f, g)| (f.as_slice(), g.as_slice()));
            sinkhorn::solve_potentials(rho, rho, &cost, epsilon, warm, 1e-7)?
        };
        *warm_self = Some((self_pot.f.clone(), self_pot.g.clone()));
        let mut grad = vec![0.0f64; rho.len()];
        let mut objective = 0.0;
        for (k, b) in class_mass.iter().enumerate() {
            let warm = warm_cross[k]
                .as_ref()
                .map(|(f, g)| (f.as_slice(), g.as_slice()));
            let cross = sinkhorn::solve_potentials(rho, b, &cost, epsilon, warm, 1e-7)?;
            let divergence = cross.dual_value - 0.5 * self_pot.dual_value - 0.5 * class_self[k];
            objective += divergence / m;
            for i in 0..rho.len() {
                grad[i] += (cross.f[i] - self_pot.f[i]) / m;
            }
            warm_cross[k] = Some((cross.f, cross.g));
        }
        let mut kl = 0.0;
        for i in 0..rho.len() {
            if rho[i] > 0.0 {
                kl += rho[i] * (rho[i] / nu_mass[i]).ln();
                grad[i] += lambda * ((rho[i] / nu_mass[i]).ln() + 1.0);
            }
        }
        objective += lambda * kl;
        Ok((objective, grad))
    };

    let (mut obj, mut grad) = objective_and_grad(&rho, &mut warm_cross, &mut warm_self)?;
    let mut trace = vec![obj];
    let mut step = 1.0 / (lambda + 1.0);
    let mut iterations = 0;
    let mut converged = false;

    while iterations < CLASS_BARY_MAX_ITER {
        iterations += 1;
        let mut improved = false;
        for _ in 0..40 {
            let trial = eg_step(&rho, &grad, step);
            let mut wc = warm_cross.clone();
            let mut ws = warm_self.clone();
            let (trial_obj, trial_grad) = objective_and_grad(&trial, &mut wc, &mut ws)?;
            if trial_obj <= obj {
                let gain = obj - trial_obj;
                rho = trial;
                obj = trial_obj;
                grad = trial_grad;
                warm_cross = wc;
                warm_self = ws;
                trace.push(obj);
                step = (step * 1.3).min(100.0);
                improved = true;
                if gain < CLASS_BARY_OBJ_TOL {
                    converged = true;
                }
                break;
            }
            step *= 0.5;
            if step < 1e-14 {
                break;
            }
        }
        if converged || !improved {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            what: "class barycenter descent",
            iterations,
            residual: trace.last().cloned().unwrap_or(f64::NAN),
            trace,
        });
    }
    let values: Vec<f64> = rho.iter().map(|&mass| mass / vol).collect();
    Ok(ClassBarycenter {
        measure: Measure::Grid(GridDensity::normalized(spec, values)?),
        epsilon,
        iterations,
        objective_trace: trace,
    })
}

pub fn class_bary_epsilon(spec: &GridSpec) -> f64 {
    let diameter2: f64 = spec
        .bounds
        .iter()
        .map(|&(lo, hi)| (hi - lo) * (hi - lo))
        .sum();
    0.01 * diameter2
}

/// Objective value of the class-barycenter functional at an arbitrary grid
/// candidate, used to compare the descent output against feasible rivals.
pub fn class_barycenter_objective(
    candidate: &GridDensity,
    class_measures: &[GridDensity],
    cfg: &EntropicConfig,
) -> Result<f64> {
    let spec = cfg.reference().spec();
    if candidate.spec() != spec {
        return Err(Error::BadGrid(
            "candidate must live on the reference grid".into(),
        ));
    }
    let epsilon = class_bary_epsilon(spec);
    let vol = spec.cell_volume();
    let centers: Vec<Point> = (0..spec.cell_count()).map(|k| spec.cell_center(k)).collect();
    let cost = CostSpec::Quadratic.matrix(&centers, &centers)?;
    let rho: Vec<f64> = candidate.values().iter().map(|v| v * vol).collect();
    let nu_mass: Vec<f64> = cfg.reference().values().iter().map(|v| v * vol).collect();
    let self_rho = sinkhorn::solve_potentials(&rho, &rho, &cost, epsilon, None, 1e-7)?;
    let m = class_measures.len() as f64;
    let mut objective = 0.0;
    for g in class_measures {
        let b: Vec<f64> = g.values().iter().map(|v| v * vol).collect();
        let cross = sinkhorn::solve_potentials(&rho, &b, &cost, epsilon, None, 1e-7)?;
        let self_b = sinkhorn::solve_potentials(&b, &b, &cost, epsilon, None, 1e-7)?;
        objective += (cross.dual_value - 0.5 * self_rho.dual_value - 0.5 * self_b.dual_value) / m;
    }
    let mut kl = 0.0;
    for i in 0..rho.len() {
        if rho[i] > 0.0 {
            if nu_mass[i] <= 0.0 {
                return Ok(f64::INFINITY);
            }
            kl += rho[i] * (rho[i] / nu_mass[i]).ln();
        }
    }
    Ok(objective + cfg.entropy_weight() * kl)
}

/// Multiplicative (mirror) step on the simplex; the gradient is shifted by
/// its minimum before exponentiation to avoid overflow.
fn eg_step(rho: &[f64], grad: &[f64], step: f64) -> Vec<f64> {
    let shift = grad
        .iter()
        .zip(rho)
        .filter(|(_, &r)| r > 0.0)
        .map(|(&g, _)| g)
        .fold(f64::INFINITY, f64::min);
    let mut out: Vec<f64> = rho
        .iter()
        .zip(grad)
        .map(|(&r, &g)| {
            if r > 0.0 {
                r * (-step * (g - shift)).exp()
            } else {
                0.0
            }
        })
        .collect();
    let total: f64 = out.iter().sum();
    for v in &mut out {
        *v /= total;
    }
    out
}

/// Result of the MMD-relaxed plan descent.
#[derive(Debug, Clone)]
pub struct MmdPlan {
    pub plan: crate::transport::TransportPlan,
    pub objective: f64,
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
}

const MMD_PLAN_MAX_ITER: usize = 200_000;
const MMD_PLAN_GAP_TOL: f64 = 1e-9;

/// Transport plan with marginal constraints relaxed to MMD penalties:
/// minimizes `<C, pi> + lambda1 MMD^2(P1#pi, a) + lambda2 MMD^2(P2#pi, b)`
/// over the simplex of couplings by mirror descent (exponentiated gradient
/// with objective backtracking). The objective trace is monotone
/// nonincreasing by construction and the Frank-Wolfe gap certifies the
/// distance to the optimum. The returned plan carries the relaxed-marginals
/// flag and only guarantees total mass one.
pub fn build_mmd_plan(source: &Sample, target: &Sample, cfg: &MmdPlanConfig) -> Result<MmdPlan> {
    cfg.validate()?;
    let a_measure = DiscreteMeasure::new(source.features.clone(), None)?;
    let b_measure = DiscreteMeasure::new(target.features.clone(), None)?;
    let a = a_measure.weights().to_vec();
    let b = b_measure.weights().to_vec();
    let m = a.len();
    let n = b.len();
    let cost = cfg.cost.matrix(a_measure.support(), b_measure.support())?;

    // Gram matrices back the biased V-statistic MMD on the fixed supports.
    let mut all_atoms: Vec<Point> = a_measure.support().to_vec();
    all_atoms.extend(b_measure.support().iter().cloned());
    let bw = match &cfg.kernel {
        MmdKernel::Gaussian { bandwidth: Some(b) } => *b,
        MmdKernel::Gaussian { bandwidth: None } => {
            let mut d: Vec<f64> = Vec::new();
            for (k, p) in all_atoms.iter().enumerate() {
                for q in &all_atoms[k + 1..] {
                    d.push(crate::num::dist(&p.0, &q.0));
                }
            }
            d.sort_by(|x, y| x.partial_cmp(y).expect("finite"));
            if d.is_empty() || d[d.len() / 2] == 0.0 {
                1.0
            } else {
                d[d.len() / 2]
            }
        }
    };
    let gram = |pts: &[Point]| -> Vec<Vec<f64>> {
        pts.iter()
            .map(|p| pts.iter().map(|q| cfg.kernel.eval(bw, &p.0, &q.0)).collect())
            .collect()
    };
    let ka = gram(a_measure.support());
    let kb = gram(b_measure.support());

    let objective_and_grad = |pi: &[f64]| -> (f64, Vec<f64>) {
        let mut r = vec![0.0f64; m];
        let mut c = vec![0.0f64; n];
        for i in 0..m {
            for j in 0..n {
                let x = pi[i * n + j];
                r[i] += x;
                c[j] += x;
            }
        }
        let dr: Vec<f64> = r.iter().zip(&a).map(|(x, y)| x - y).collect();
        let dc: Vec<f64> = c.iter().zip(&b).map(|(x, y)| x - y).collect();
        let ka_dr: Vec<f64> = (0..m)
            .map(|i| (0..m).map(|i2| ka[i][i2] * dr[i2]).sum())
            .collect();
        let kb_dc: Vec<f64> = (0..n)
            .map(|j| (0..n).map(|j2| kb[j][j2] * dc[j2]).sum())
            .collect();
        let mmd_a: f64 = dr.iter().zip(&ka_dr).map(|(x, y)| x * y).sum();
        let mmd_b: f64 = dc.iter().zip(&kb_dc).map(|(x, y)| x * y).sum();
        let transport: f64 = (0..m)
            .map(|i| (0..n).map(|j| pi[i * n + j] * cost[i][j]).sum::<f64>())
            .sum();
        let objective = transport + cfg.lambda1 * mmd_a + cfg.lambda2 * mmd_b;
        let mut grad = vec![0.0f64; m * n];
        for i in 0..m {
            for j in 0..n {
                grad[i * n + j] =
                    cost[i][j] + 2.0 * cfg.lambda1 * ka_dr[i] + 2.0 * cfg.lambda2 * kb_dc[j];
            }
        }
        (objective, grad)
    };

    // Independent coupling as the starting point.
    let mut pi: Vec<f64> = (0..m * n).map(|k| a[k / n] * b[k % n]).collect();
    let (mut obj, mut grad) = objective_and_grad(&pi);
    let mut trace = vec![obj];
    let mut step = 1.0;
    let mut iterations = 0usize;

    loop {
        // Frank-Wolfe gap over the simplex: <grad, pi> - min_k grad_k bounds
        // the objective distance to the optimum.
        let min_g = grad.iter().cloned().fold(f64::INFINITY, f64::min);
        let fw_gap: f64 = grad.iter().zip(&pi).map(|(g, p)| g * p).sum::<f64>() - min_g;
        if fw_gap < MMD_PLAN_GAP_TOL {
            break;
        }
        if iterations >= MMD_PLAN_MAX_ITER {
            return Err(Error::NonConvergence {
                what: "mmd plan mirror descent",
                iterations,
                residual: fw_gap,
                trace,
            });
        }
        iterations += 1;
        let mut moved = false;
        for _ in 0..60 {
            let trial = eg_step(&pi, &grad, step);
            let (trial_obj, trial_grad) = objective_and_grad(&trial);
            if trial_obj <= obj {
                pi = trial;
                obj = trial_obj;
                grad = trial_grad;
                trace.push(obj);
                step *= 1.2;
                moved = true;
                break;
            }
            step *= 0.5;
            if step < 1e-16 {
                break;
            }
        }
        if !moved {
            break; // numerically stationary
        }
    }

    let plan = crate::transport::TransportPlan::new(
        a_measure.support().to_vec(),
        b_measure.support().to_vec(),
        a,
        b,
        pi,
        obj,
        true,
    )?;
    Ok(MmdPlan {
        plan,
        objective: obj,
        objective_trace: trace,
        iterations,
    })
}
