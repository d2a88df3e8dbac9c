//! Measure representations and measure-level transforms.
//!
//! Two concrete representations cover everything the crate needs: weighted
//! discrete point measures and piecewise-constant densities on axis-aligned
//! grids. Joint distributions on features × labels are measures on
//! `R^(p+1)` whose last axis is the label axis; class labels are encoded as
//! reals on that axis.
//!
//! All measure values are immutable after construction and every constructor
//! re-checks the type invariants (unit mass, nonnegativity, finite
//! coordinates).

use crate::error::{Error, Result};
use crate::num::{kahan_sum, normal_cdf};
use crate::rng::RandomSeed;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Tolerance under which two support points are considered coincident
/// (sup-norm). Coincident points are merged at construction so that total
/// variation between discrete measures is well defined.
pub const MERGE_TOL: f64 = 1e-12;

/// Unit-mass tolerance for discrete weights.
pub const MASS_TOL_DISCRETE: f64 = 1e-12;

/// Unit-mass tolerance for grid densities.
pub const MASS_TOL_GRID: f64 = 1e-9;

/// A point of the feature (or feature × label) space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(pub Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::EmptyInput("point coordinates"));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("point coordinate"));
        }
        Ok(Point(coords))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }
}

impl From<f64> for Point {
    fn from(x: f64) -> Self {
        Point(vec![x])
    }
}

impl From<(f64, f64)> for Point {
    fn from((x, y): (f64, f64)) -> Self {
        Point(vec![x, y])
    }
}

/// Labeled feature points, the raw input to every pre-conditioner.
///
/// `labels`, when present, must align with `features`; `classes`, when
/// present, must partition the index set `{0..n}` exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: Vec<Point>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<Vec<Vec<usize>>>,
}

impl Sample {
    pub fn new(features: Vec<Point>) -> Result<Self> {
        Self::with_labels(features, None)
    }

    pub fn with_labels(features: Vec<Point>, labels: Option<Vec<f64>>) -> Result<Self> {
        let s = Sample {
            features,
            labels,
            classes: None,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_classes(
        features: Vec<Point>,
        labels: Option<Vec<f64>>,
        classes: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let s = Sample {
            features,
            labels,
            classes: Some(classes),
        };
        s.validate()?;
        Ok(s)
    }

    /// Group indices by distinct label value (exact equality), in first-seen
    /// order. Convenience for class-labeled samples without an explicit
    /// partition.
    pub fn classes_from_labels(&self) -> Result<Vec<(f64, Vec<usize>)>> {
        let labels = self
            .labels
            .as_ref()
            .ok_or(Error::EmptyInput("labels required to derive classes"))?;
        let mut groups: Vec<(f64, Vec<usize>)> = Vec::new();
        for (i, &y) in labels.iter().enumerate() {
            match groups.iter_mut().find(|(v, _)| *v == y) {
                Some((_, idx)) => idx.push(i),
                None => groups.push((y, vec![i])),
            }
        }
        Ok(groups)
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features[0].dim()
    }

    /// 1-D feature values, for scalar statistics such as the KS statistic.
    pub fn scalar_features(&self) -> Result<Vec<f64>> {
        if self.dim() != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: self.dim(),
            });
        }
        Ok(self.features.iter().map(|p| p.0[0]).collect())
    }

    /// Joint (feature, label) points on `R^(p+1)`.
    pub fn joint_points(&self) -> Result<Vec<Point>> {
        let labels = self
            .labels
            .as_ref()
            .ok_or(Error::EmptyInput("labels required for a joint measure"))?;
        Ok(self
            .features
            .iter()
            .zip(labels)
            .map(|(p, &y)| {
                let mut c = p.0.clone();
                c.push(y);
                Point(c)
            })
            .collect())
    }

    fn validate(&self) -> Result<()> {
        if self.features.is_empty() {
            return Err(Error::EmptyInput("sample features"));
        }
        let d = self.features[0].dim();
        for p in &self.features {
            if p.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: p.dim(),
                });
            }
            if p.0.iter().any(|c| !c.is_finite()) {
                return Err(Error::NonFinite("sample feature"));
            }
        }
        if let Some(labels) = &self.labels {
            if labels.len() != self.features.len() {
                return Err(Error::LengthMismatch(format!(
                    "{} labels for {} features",
                    labels.len(),
                    self.features.len()
                )));
            }
            if labels.iter().any(|y| !y.is_finite()) {
                return Err(Error::NonFinite("sample label"));
            }
        }
        if let Some(classes) = &self.classes {
            let mut seen = vec![false; self.features.len()];
            for class in classes {
                for &i in class {
                    if i >= seen.len() || seen[i] {
                        return Err(Error::BadClassPartition);
                    }
                    seen[i] = true;
                }
            }
            if !seen.iter().all(|&s| s) {
                return Err(Error::BadClassPartition);
            }
        }
        Ok(())
    }
}

/// A weighted discrete point measure with unit mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    support: Vec<Point>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    /// Build from points and optional weights. Missing weights mean uniform;
    /// weights are normalized to sum 1; coincident points are merged with
    /// summed weight; zero-weight atoms are dropped.
    pub fn new(points: Vec<Point>, weights: Option<Vec<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyInput("support points"));
        }
        let d = points[0].dim();
        for p in &points {
            if p.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: p.dim(),
                });
            }
        }
        let raw = match weights {
            Some(w) => {
                if w.len() != points.len() {
                    return Err(Error::LengthMismatch(format!(
                        "{} weights for {} points",
                        w.len(),
                        points.len()
                    )));
                }
                if w.iter().any(|&x| !x.is_finite() || x < 0.0) {
                    return Err(Error::BadWeights);
                }
                w
            }
            None => vec![1.0; points.len()],
        };
        let total = kahan_sum(raw.iter().cloned());
        if total <= 0.0 {
            return Err(Error::BadWeights);
        }

        // Merge coincident points (sup-norm tolerance), summing weights.
        let mut support: Vec<Point> = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        for (p, w) in points.into_iter().zip(raw) {
            if w == 0.0 {
                continue;
            }
            match support.iter().position(|q| sup_close(&p.0, &q.0)) {
                Some(k) => weights[k] += w,
                None => {
                    support.push(p);
                    weights.push(w);
                }
            }
        }
        if support.is_empty() {
            return Err(Error::BadWeights);
        }
        for w in &mut weights {
            *w /= total;
        }
        let m = DiscreteMeasure { support, weights };
        m.check_mass()?;
        Ok(m)
    }

    pub fn support(&self) -> &[Point] {
        &self.support
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.support[0].dim()
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    fn check_mass(&self) -> Result<()> {
        let mass = kahan_sum(self.weights.iter().cloned());
        if (mass - 1.0).abs() > MASS_TOL_DISCRETE {
            return Err(Error::Internal(format!(
                "discrete mass {mass} deviates from 1 beyond tolerance"
            )));
        }
        Ok(())
    }
}

fn sup_close(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= MERGE_TOL)
}

/// Specification of an axis-aligned uniform grid: a box and a per-axis cell
/// count. The default resolution is 256 cells per axis in one and two
/// dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub bounds: Vec<(f64, f64)>,
    pub resolution: Vec<usize>,
}

pub const DEFAULT_RESOLUTION: usize = 256;

impl GridSpec {
    pub fn new(bounds: Vec<(f64, f64)>, resolution: Vec<usize>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::EmptyInput("grid bounds"));
        }
        if bounds.len() != resolution.len() {
            return Err(Error::LengthMismatch(format!(
                "{} bounds for {} resolutions",
                bounds.len(),
                resolution.len()
            )));
        }
        for &(lo, hi) in &bounds {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::BadGrid(format!("invalid axis bounds ({lo}, {hi})")));
            }
        }
        if resolution.iter().any(|&r| r == 0) {
            return Err(Error::BadGrid("zero resolution".into()));
        }
        Ok(GridSpec { bounds, resolution })
    }

    /// Default-resolution grid covering the given points with padding.
    pub fn covering(points: &[Point], pad: f64, resolution: usize) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyInput("points for grid"));
        }
        let d = points[0].dim();
        let mut bounds = Vec::with_capacity(d);
        for a in 0..d {
            let lo = points.iter().map(|p| p.0[a]).fold(f64::INFINITY, f64::min);
            let hi = points
                .iter()
                .map(|p| p.0[a])
                .fold(f64::NEG_INFINITY, f64::max);
            let w = (hi - lo).max(1e-6);
            bounds.push((lo - pad * w.max(1.0), hi + pad * w.max(1.0)));
        }
        GridSpec::new(bounds, vec![resolution; d])
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn cell_count(&self) -> usize {
        self.resolution.iter().product()
    }

    pub fn cell_widths(&self) -> Vec<f64> {
        self.bounds
            .iter()
            .zip(&self.resolution)
            .map(|(&(lo, hi), &r)| (hi - lo) / r as f64)
            .collect()
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_widths().iter().product()
    }

    /// Multi-index of the flat cell index (row-major, last axis fastest).
    pub fn unravel(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0usize; self.dim()];
        for a in (0..self.dim()).rev() {
            idx[a] = flat % self.resolution[a];
            flat /= self.resolution[a];
        }
        idx
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        let mut flat = 0usize;
        for a in 0..self.dim() {
            flat = flat * self.resolution[a] + idx[a];
        }
        flat
    }

    pub fn cell_center(&self, flat: usize) -> Point {
        let idx = self.unravel(flat);
        let w = self.cell_widths();
        Point(
            idx.iter()
                .enumerate()
                .map(|(a, &i)| self.bounds[a].0 + (i as f64 + 0.5) * w[a])
                .collect(),
        )
    }

    /// Per-axis `[lo, hi)` edges of a cell.
    pub fn cell_edges(&self, flat: usize) -> Vec<(f64, f64)> {
        let idx = self.unravel(flat);
        let w = self.cell_widths();
        idx.iter()
            .enumerate()
            .map(|(a, &i)| {
                (
                    self.bounds[a].0 + i as f64 * w[a],
                    self.bounds[a].0 + (i + 1) as f64 * w[a],
                )
            })
            .collect()
    }

    /// Flat index of the cell containing `x`, or None outside the box.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        if x.len() != self.dim() {
            return None;
        }
        let w = self.cell_widths();
        let mut idx = Vec::with_capacity(self.dim());
        for a in 0..self.dim() {
            let (lo, hi) = self.bounds[a];
            if x[a] < lo || x[a] > hi {
                return None;
            }
            let i = (((x[a] - lo) / w[a]) as usize).min(self.resolution[a] - 1);
            idx.push(i);
        }
        Some(self.ravel(&idx))
    }
}

/// A nonnegative piecewise-constant probability density on a uniform grid.
/// Values are densities (mass per unit volume); total mass is 1 within 1e-9.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDensity {
    spec: GridSpec,
    values: Vec<f64>,
}

impl GridDensity {
    pub fn new(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.cell_count() {
            return Err(Error::LengthMismatch(format!(
                "{} values for {} cells",
                values.len(),
                spec.cell_count()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::NonFinite("grid density value"));
        }
        let g = GridDensity { spec, values };
        g.check_mass()?;
        Ok(g)
    }

    /// Normalize raw nonnegative values to unit mass, then construct.
    pub fn normalized(spec: GridSpec, mut values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::NonFinite("grid density value"));
        }
        let vol = spec.cell_volume();
        let mass = kahan_sum(values.iter().map(|v| v * vol));
        if mass <= 0.0 {
            return Err(Error::BadWeights);
        }
        for v in &mut values {
            *v /= mass;
        }
        GridDensity::new(spec, values)
    }

    /// Evaluate a density function at cell centers (midpoint rule) and
    /// normalize.
    pub fn from_fn(spec: GridSpec, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values: Vec<f64> = (0..spec.cell_count())
            .map(|k| f(spec.cell_center(k).coords()).max(0.0))
            .collect();
        GridDensity::normalized(spec, values)
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    /// Density at `x` (0 outside the box).
    pub fn density_at(&self, x: &[f64]) -> f64 {
        self.spec.locate(x).map_or(0.0, |k| self.values[k])
    }

    /// Mass of an axis-aligned box, exact for the piecewise-constant density.
    pub fn box_mass(&self, boxb: &[(f64, f64)]) -> f64 {
        let mut total = 0.0;
        for (k, &v) in self.values.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let edges = self.spec.cell_edges(k);
            let mut frac_vol = v;
            for a in 0..self.dim() {
                let lo = edges[a].0.max(boxb[a].0);
                let hi = edges[a].1.min(boxb[a].1);
                if hi <= lo {
                    frac_vol = 0.0;
                    break;
                }
                frac_vol *= hi - lo;
            }
            total += frac_vol;
        }
        total
    }

    fn check_mass(&self) -> Result<()> {
        let vol = self.spec.cell_volume();
        let mass = kahan_sum(self.values.iter().map(|v| v * vol));
        if (mass - 1.0).abs() > MASS_TOL_GRID {
            return Err(Error::Internal(format!(
                "grid mass {mass} deviates from 1 beyond tolerance"
            )));
        }
        Ok(())
    }
}

/// The universal measure currency: either discrete or grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "lowercase")]
pub enum Measure {
    Discrete(DiscreteMeasure),
    Grid(GridDensity),
}

/// Integrands accepted by [`Measure::moment`]. `X`-family integrands read the
/// first axis; `Y`-family integrands read the label (last) axis and require
/// dimension ≥ 2.
pub enum Integrand<'a> {
    One,
    X,
    XSquared,
    Y,
    YSquared,
    XY,
    Custom(&'a dyn Fn(&[f64]) -> f64),
}

impl Measure {
    pub fn dim(&self) -> usize {
        match self {
            Measure::Discrete(d) => d.dim(),
            Measure::Grid(g) => g.dim(),
        }
    }

    pub fn as_discrete(&self) -> Option<&DiscreteMeasure> {
        match self {
            Measure::Discrete(d) => Some(d),
            _ => None,
        }
    }

    pub fn as_grid(&self) -> Option<&GridDensity> {
        match self {
            Measure::Grid(g) => Some(g),
            _ => None,
        }
    }

    /// Weighted atoms representing the measure: the support itself for the
    /// discrete variant, cell centers weighted by cell mass (zero-mass cells
    /// dropped) for the grid variant.
    pub fn atoms(&self) -> Vec<(Point, f64)> {
        match self {
            Measure::Discrete(d) => d
                .support
                .iter()
                .cloned()
                .zip(d.weights.iter().cloned())
                .collect(),
            Measure::Grid(g) => {
                let vol = g.spec.cell_volume();
                g.values
                    .iter()
                    .enumerate()
                    .filter(|(_, &v)| v > 0.0)
                    .map(|(k, &v)| (g.spec.cell_center(k), v * vol))
                    .collect()
            }
        }
    }

    /// Discrete measure of the atoms, for transport-based metrics.
    pub fn to_discrete(&self) -> Result<DiscreteMeasure> {
        match self {
            Measure::Discrete(d) => Ok(d.clone()),
            Measure::Grid(_) => {
                let (points, weights): (Vec<_>, Vec<_>) = self.atoms().into_iter().unzip();
                DiscreteMeasure::new(points, Some(weights))
            }
        }
    }

    /// Mass of an axis-aligned box.
    pub fn box_mass(&self, boxb: &[(f64, f64)]) -> f64 {
        match self {
            Measure::Discrete(d) => kahan_sum(
                d.support
                    .iter()
                    .zip(&d.weights)
                    .filter(|(p, _)| {
                        p.0.iter()
                            .zip(boxb)
                            .all(|(&x, &(lo, hi))| x >= lo && x < hi)
                    })
                    .map(|(_, &w)| w),
            ),
            Measure::Grid(g) => g.box_mass(boxb),
        }
    }

    /// Integrate an integrand: exact weighted sum for discrete measures,
    /// midpoint-rule quadrature for grids.
    pub fn moment(&self, integrand: Integrand) -> Result<f64> {
        let dim = self.dim();
        let needs_label = matches!(
            integrand,
            Integrand::Y | Integrand::YSquared | Integrand::XY
        );
        if needs_label && dim < 2 {
            return Err(Error::NoLabelAxis { dim });
        }
        let eval = |c: &[f64]| -> f64 {
            match &integrand {
                Integrand::One => 1.0,
                Integrand::X => c[0],
                Integrand::XSquared => c[0] * c[0],
                Integrand::Y => c[dim - 1],
                Integrand::YSquared => c[dim - 1] * c[dim - 1],
                Integrand::XY => c[0] * c[dim - 1],
                Integrand::Custom(f) => f(c),
            }
        };
        let value = match self {
            Measure::Discrete(d) => kahan_sum(
                d.support
                    .iter()
                    .zip(&d.weights)
                    .map(|(p, &w)| w * eval(&p.0)),
            ),
            Measure::Grid(g) => {
                let vol = g.spec.cell_volume();
                kahan_sum(
                    g.values
                        .iter()
                        .enumerate()
                        .map(|(k, &v)| v * vol * eval(g.spec.cell_center(k).coords())),
                )
            }
        };
        Ok(value)
    }

    /// Mean vector.
    pub fn mean(&self) -> Vec<f64> {
        let dim = self.dim();
        let mut m = vec![0.0; dim];
        for (p, w) in self.atoms() {
            for a in 0..dim {
                m[a] += w * p.0[a];
            }
        }
        m
    }

    /// Draw `n` i.i.d. points. Discrete: categorical by weights. Grid: cell
    /// by mass, then uniform within the cell. Deterministic given the seed.
    pub fn sample(&self, n: usize, seed: RandomSeed) -> Result<Sample> {
        if n == 0 {
            return Err(Error::EmptyInput("sample size"));
        }
        let mut rng = seed.rng();
        let features = match self {
            Measure::Discrete(d) => {
                let cum = cumulative(&d.weights);
                (0..n)
                    .map(|_| {
                        let k = pick(&cum, rng.gen::<f64>());
                        d.support[k].clone()
                    })
                    .collect()
            }
            Measure::Grid(g) => {
                let vol = g.spec.cell_volume();
                let masses: Vec<f64> = g.values.iter().map(|v| v * vol).collect();
                let cum = cumulative(&masses);
                (0..n)
                    .map(|_| {
                        let k = pick(&cum, rng.gen::<f64>());
                        let edges = g.spec.cell_edges(k);
                        Point(
                            edges
                                .iter()
                                .map(|&(lo, hi)| lo + (hi - lo) * rng.gen::<f64>())
                                .collect(),
                        )
                    })
                    .collect()
            }
        };
        Sample::new(features)
    }

    /// Draw from a joint measure, splitting the label (last) axis.
    pub fn sample_joint(&self, n: usize, seed: RandomSeed) -> Result<Sample> {
        let dim = self.dim();
        if dim < 2 {
            return Err(Error::NoLabelAxis { dim });
        }
        let raw = self.sample(n, seed)?;
        let mut features = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for p in raw.features {
            let mut c = p.0;
            let y = c.pop().expect("dim >= 2");
            features.push(Point(c));
            labels.push(y);
        }
        Sample::with_labels(features, Some(labels))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parse and re-validate a serialized measure.
    pub fn from_json(text: &str) -> Result<Measure> {
        let m: Measure = serde_json::from_str(text)?;
        match &m {
            Measure::Discrete(d) => d.check_mass()?,
            Measure::Grid(g) => g.check_mass()?,
        }
        Ok(m)
    }
}

fn cumulative(weights: &[f64]) -> Vec<f64> {
    let mut cum = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for &w in weights {
        acc += w;
        cum.push(acc);
    }
    if let Some(last) = cum.last_mut() {
        *last = f64::INFINITY; // guard against rounding at the top end
    }
    cum
}

fn pick(cum: &[f64], u: f64) -> usize {
    cum.partition_point(|&c| c < u).min(cum.len() - 1)
}

/// Build a discrete measure from points and optional weights.
pub fn make_discrete(points: Vec<Point>, weights: Option<Vec<f64>>) -> Result<Measure> {
    Ok(Measure::Discrete(DiscreteMeasure::new(points, weights)?))
}

/// Convolve a discrete measure with an isotropic Gaussian of standard
/// deviation `sigma` and represent the result on `target`. Each cell carries
/// the exact Gaussian mass assigned to it (product of normal CDF increments),
/// so small bandwidths remain well represented. Errors if the box captures
/// less than 0.999 of the mass.
pub fn gaussian_convolve(m: &DiscreteMeasure, sigma: f64, target: &GridSpec) -> Result<Measure> {
    if sigma <= 0.0 {
        return Err(Error::InvalidConfig("sigma must be positive".into()));
    }
    if target.dim() != m.dim() {
        return Err(Error::DimensionMismatch {
            expected: m.dim(),
            got: target.dim(),
        });
    }
    let dim = target.dim();
    let res = &target.resolution;
    let widths = target.cell_widths();
    let vol = target.cell_volume();

    // Per-axis CDF increments per atom, combined as a product kernel.
    let mut masses = vec![0.0f64; target.cell_count()];
    for (p, &w) in m.support().iter().zip(m.weights()) {
        let mut axis_cdf: Vec<Vec<f64>> = Vec::with_capacity(dim);
        for a in 0..dim {
            let lo = target.bounds[a].0;
            let mut col = Vec::with_capacity(res[a]);
            let mut prev = normal_cdf((lo - p.0[a]) / sigma);
            for i in 0..res[a] {
                let edge = lo + (i as f64 + 1.0) * widths[a];
                let next = normal_cdf((edge - p.0[a]) / sigma);
                col.push((next - prev).max(0.0));
                prev = next;
            }
            axis_cdf.push(col);
        }
        for (flat, mass) in masses.iter_mut().enumerate() {
            let idx = target.unravel(flat);
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
    if captured < 0.999 {
        return Err(Error::GridTooSmall { captured });
    }
    let values: Vec<f64> = masses.into_iter().map(|m| m / vol).collect();
    Ok(Measure::Grid(GridDensity::normalized(
        target.clone(),
        values,
    )?))
}
