//! Scenario configuration, experiment orchestration, and result
//! persistence. A scenario is a TOML (or JSON) document naming a target
//! measure, a pre-conditioner, a sample-size grid, a loss/class pair, and a
//! flow to run; results land as a JSON record, CSV tables, and SVG plots,
//! written atomically.
//!
//! All randomness flows from the single scenario seed through counter-based
//! splitting, so outputs are a pure function of (config, seed).

use crate::adaptation::{
    affine_recovery_test, blur_sweep, is_symmetric_positive_definite, run_conditional_transfer,
    DomainPair, GuessVariant, GuessWeighting,
};
use crate::error::{Error, Result};
use crate::learning::{regression_tv_bound_check, HypothesisClass, LossFunction, LossKind};
use crate::measure::{GridDensity, GridSpec, Measure, Point, Sample};
use crate::metrics::ConvergenceMode;
use crate::num::normal_pdf;
use crate::plot::{line_chart, Series};
use crate::precondition::{
    build_convex_hull_uniform, build_empirical, build_histogram, build_kde,
    build_wasserstein_barycenter, BandwidthRule, Kernel,
};
use crate::recovery::{flrs_verdict, CasePreset, MeasureSequence, RecoveryTolerances};
use crate::rng::RandomSeed;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

/// Specification of the limit measure a scenario converges to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TargetSpec {
    /// Truncated normal density on a 1-D grid.
    Gaussian {
        mean: f64,
        std: f64,
        box_: (f64, f64),
        resolution: usize,
    },
    /// Uniform density on a box.
    UniformBox {
        box_: Vec<(f64, f64)>,
        resolution: Vec<usize>,
    },
    /// Joint grid for `y = slope x + intercept + noise` with a truncated
    /// Gaussian feature marginal.
    LinearJoint {
        slope: f64,
        intercept: f64,
        x_std: f64,
        x_box: (f64, f64),
        noise_std: f64,
        resolution: Vec<usize>,
    },
    /// Weighted discrete measure given inline.
    Discrete {
        points: Vec<Vec<f64>>,
        weights: Option<Vec<f64>>,
    },
    /// A serialized measure on disk.
    File { path: String },
}

impl TargetSpec {
    pub fn build(&self) -> Result<Measure> {
        match self {
            TargetSpec::Gaussian {
                mean,
                std,
                box_,
                resolution,
            } => {
                if *std <= 0.0 {
                    return Err(Error::InvalidConfig("std must be positive".into()));
                }
                let spec = GridSpec::new(vec![*box_], vec![*resolution])?;
                Ok(Measure::Grid(GridDensity::from_fn(spec, |c| {
                    normal_pdf((c[0] - mean) / std) / std
                })?))
            }
            TargetSpec::UniformBox { box_, resolution } => {
                let spec = GridSpec::new(box_.clone(), resolution.clone())?;
                Ok(Measure::Grid(GridDensity::from_fn(spec, |_| 1.0)?))
            }
            TargetSpec::LinearJoint {
                slope,
                intercept,
                x_std,
                x_box,
                noise_std,
                resolution,
            } => {
                if resolution.len() != 2 {
                    return Err(Error::InvalidConfig(
                        "linear-joint needs a 2-axis resolution".into(),
                    ));
                }
                let y_lo = (slope * x_box.0 + intercept).min(slope * x_box.1 + intercept)
                    - 4.5 * noise_std;
                let y_hi = (slope * x_box.0 + intercept).max(slope * x_box.1 + intercept)
                    + 4.5 * noise_std;
                let spec = GridSpec::new(vec![*x_box, (y_lo, y_hi)], resolution.clone())?;
                let (sx, sn, a, b) = (*x_std, *noise_std, *slope, *intercept);
                Ok(Measure::Grid(GridDensity::from_fn(spec, move |c| {
                    normal_pdf(c[0] / sx) / sx * normal_pdf((c[1] - a * c[0] - b) / sn) / sn
                })?))
            }
            TargetSpec::Discrete { points, weights } => {
                let pts = points
                    .iter()
                    .map(|c| Point::new(c.clone()))
                    .collect::<Result<Vec<_>>>()?;
                crate::measure::make_discrete(pts, weights.clone())
            }
            TargetSpec::File { path } => {
                let text = std::fs::read_to_string(path)?;
                Measure::from_json(&text)
            }
        }
    }
}

/// Pre-conditioner choice applied to each drawn sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PreconSpec {
    Empirical,
    Histogram {
        /// Bins per axis on the target's grid box.
        bins: Vec<usize>,
    },
    Kde {
        kernel: Kernel,
        bandwidth: BandwidthRule,
        /// Grid for the estimate; defaults to the target's own grid.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        resolution: Option<Vec<usize>>,
    },
    ConvexHull {
        resolution: usize,
    },
    WassersteinBarycenter,
    EntropicBarycenter {
        lambda: f64,
        reference: Box<TargetSpec>,
    },
    ClassBarycenter {
        lambda: f64,
        reference: Box<TargetSpec>,
        kernel: Kernel,
        bandwidth: BandwidthRule,
    },
}

impl PreconSpec {
    /// Apply the pre-conditioner to a sample, borrowing grid geometry from
    /// the target when the output lives on a grid.
    pub fn build(&self, sample: &Sample, target: &Measure) -> Result<Measure> {
        match self {
            PreconSpec::Empirical => build_empirical(sample),
            PreconSpec::Histogram { bins } => {
                let spec = target_grid(target)?;
                let bins_spec = GridSpec::new(spec.bounds.clone(), bins.clone())?;
                build_histogram(sample, &bins_spec)
            }
            PreconSpec::Kde {
                kernel,
                bandwidth,
                resolution,
            } => {
                let spec = target_grid(target)?;
                let grid = match resolution {
                    Some(res) => GridSpec::new(spec.bounds.clone(), res.clone())?,
                    None => spec.clone(),
                };
                // Pad the estimate's grid by whole cells so kernel mass near
                // the box edge stays captured; aligned cells keep the
                // common-refinement TV exact and cheap.
                let h = bandwidth.bandwidth(sample.len());
                let widths = grid.cell_widths();
                let mut bounds = Vec::with_capacity(grid.dim());
                let mut res = Vec::with_capacity(grid.dim());
                for a in 0..grid.dim() {
                    let pad_cells = (6.0 * h / widths[a]).ceil() as usize;
                    let (lo, hi) = grid.bounds[a];
                    bounds.push((
                        lo - pad_cells as f64 * widths[a],
                        hi + pad_cells as f64 * widths[a],
                    ));
                    res.push(grid.resolution[a] + 2 * pad_cells);
                }
                let padded = GridSpec::new(bounds, res)?;
                build_kde(sample, *kernel, bandwidth, &padded)
            }
            PreconSpec::ConvexHull { resolution } => build_convex_hull_uniform(sample, *resolution),
            PreconSpec::WassersteinBarycenter => build_wasserstein_barycenter(sample),
            PreconSpec::EntropicBarycenter { lambda, reference } => {
                let cfg = self.entropic_config(*lambda, reference)?;
                crate::precondition::build_entropic_barycenter(sample, &cfg)
            }
            PreconSpec::ClassBarycenter {
                lambda,
                reference,
                kernel,
                bandwidth,
            } => {
                let cfg = self.entropic_config(*lambda, reference)?;
                let rule = crate::precondition::PerClassRule::Kde {
                    kernel: *kernel,
                    bw: bandwidth.clone(),
                };
                Ok(crate::precondition::build_class_barycenter(sample, &rule, &cfg)?.measure)
            }
        }
    }

    fn entropic_config(
        &self,
        lambda: f64,
        reference: &TargetSpec,
    ) -> Result<crate::precondition::EntropicConfig> {
        match reference.build()? {
            Measure::Grid(g) => crate::precondition::EntropicConfig::new(g, lambda),
            Measure::Discrete(_) => Err(Error::InvalidConfig(
                "entropic reference must be a grid density".into(),
            )),
        }
    }
}

fn target_grid(target: &Measure) -> Result<&GridSpec> {
    match target {
        Measure::Grid(g) => Ok(g.spec()),
        Measure::Discrete(_) => Err(Error::InvalidConfig(
            "this pre-conditioner needs a grid target to borrow geometry from".into(),
        )),
    }
}

/// Loss section of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lip_c: Option<f64>,
}

impl LossSpec {
    pub fn build(&self) -> LossFunction {
        LossFunction {
            kind: self.kind,
            clip: self.clip,
            bound_m: self.bound_m.or(self.clip),
            lip_c: self.lip_c,
        }
    }
}

/// Class section of a scenario (affine only; finite families are built in
/// code, not from config).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub param_box: Vec<(f64, f64)>,
    pub feature_box: Vec<(f64, f64)>,
}

impl ClassSpec {
    pub fn build(&self) -> Result<HypothesisClass> {
        HypothesisClass::affine(self.param_box.clone(), self.feature_box.clone())
    }
}

/// Which flow the scenario runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    Recovery,
    Metrics,
    Adaptation,
}

/// Metrics-flow settings: a distance trajectory with optional verdicts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSpec {
    pub mode: ConvergenceMode,
    /// Verdict: the final distance must fall below this.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub require_last_below: Option<f64>,
    /// Verdict: the trajectory must be strictly smaller at the end than at
    /// the start.
    #[serde(default)]
    pub require_decrease: bool,
}

/// Synthetic two-class Gaussian generator shared by the adaptation flows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoClassGaussianSpec {
    /// Per-class means; one entry per class, feature dimension inferred.
    pub means: Vec<Vec<f64>>,
    /// Class label values aligned with `means`.
    pub values: Vec<f64>,
    pub std: f64,
    pub per_class: usize,
}

impl TwoClassGaussianSpec {
    pub fn draw(&self, seed: RandomSeed) -> Result<Sample> {
        use rand::Rng;
        if self.means.len() != self.values.len() || self.means.is_empty() {
            return Err(Error::InvalidConfig("means and values must align".into()));
        }
        let mut rng = seed.rng();
        let dim = self.means[0].len();
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..self.per_class {
            for (mean, &value) in self.means.iter().zip(&self.values) {
                let coords: Vec<f64> = (0..dim)
                    .map(|a| {
                        let u1: f64 = rng.gen::<f64>().max(1e-12);
                        let u2: f64 = rng.gen();
                        mean[a]
                            + self.std
                                * (-2.0 * u1.ln()).sqrt()
                                * (2.0 * std::f64::consts::PI * u2).cos()
                    })
                    .collect();
                features.push(Point::new(coords)?);
                labels.push(value);
            }
        }
        Sample::with_labels(features, Some(labels))
    }

    pub fn shifted(&self, shift: &[f64]) -> Result<TwoClassGaussianSpec> {
        let mut out = self.clone();
        for mean in &mut out.means {
            if mean.len() != shift.len() {
                return Err(Error::DimensionMismatch {
                    expected: mean.len(),
                    got: shift.len(),
                });
            }
            for (m, s) in mean.iter_mut().zip(shift) {
                *m += s;
            }
        }
        Ok(out)
    }
}

/// Adaptation-flow settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum AdaptationSpec {
    /// Per-class conditional transfer onto a shifted copy of the source.
    ConditionalTransfer {
        source: TwoClassGaussianSpec,
        shift: Vec<f64>,
        eval_per_class: usize,
        weighting: GuessWeighting,
        variant: GuessVariant,
        min_accuracy: f64,
        max_gap: f64,
    },
    /// Exact recovery of affine deformations over random trials.
    AffineRecovery {
        n: usize,
        trials: usize,
        max_condition: f64,
        max_gap: f64,
    },
    /// Gaussian-blur pre-conditioning sweep on a synthetic labeled joint.
    BlurSweep {
        data: TwoClassGaussianSpec,
        sigmas: Vec<f64>,
        /// Accuracy at the smallest positive sigma must sit within this of
        /// the unblurred accuracy.
        accuracy_tol: f64,
    },
}

/// A full scenario document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    pub kind: ScenarioKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preconditioner: Option<PreconSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_grid: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<LossSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<ClassSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<CasePreset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<RecoveryTolerances>,
    /// Also run the standardized regression TV-bound check (recovery flow,
    /// 1-D feature targets).
    #[serde(default)]
    pub regression_bound: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricsSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adaptation: Option<AdaptationSpec>,
}

impl ScenarioConfig {
    pub fn from_str_auto(text: &str) -> Result<Self> {
        // TOML first, JSON as the alternative encoding.
        match toml::from_str::<ScenarioConfig>(text) {
            Ok(cfg) => Ok(cfg),
            Err(toml_err) => match serde_json::from_str::<ScenarioConfig>(text) {
                Ok(cfg) => Ok(cfg),
                Err(_) => Err(Error::InvalidConfig(format!("not valid TOML: {toml_err}"))),
            },
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::InvalidConfig(format!("cannot read {}: {e}", path.display()))
        })?;
        let cfg = Self::from_str_auto(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            ScenarioKind::Recovery => {
                for (field, missing) in [
                    ("target", self.target.is_none()),
                    ("preconditioner", self.preconditioner.is_none()),
                    ("n_grid", self.n_grid.is_none()),
                    ("loss", self.loss.is_none()),
                    ("class", self.class.is_none()),
                    ("preset", self.preset.is_none()),
                ] {
                    if missing {
                        return Err(Error::InvalidConfig(format!(
                            "recovery scenario `{}` is missing the `{field}` section",
                            self.name
                        )));
                    }
                }
            }
            ScenarioKind::Metrics => {
                if self.target.is_none()
                    || self.preconditioner.is_none()
                    || self.n_grid.is_none()
                    || self.metrics.is_none()
                {
                    return Err(Error::InvalidConfig(format!(
                        "metrics scenario `{}` needs target, preconditioner, n_grid, metrics",
                        self.name
                    )));
                }
            }
            ScenarioKind::Adaptation => {
                if self.adaptation.is_none() {
                    return Err(Error::InvalidConfig(format!(
                        "adaptation scenario `{}` needs the `adaptation` section",
                        self.name
                    )));
                }
            }
        }
        if let Some(grid) = &self.n_grid {
            if grid.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::InvalidConfig("n_grid must be increasing".into()));
            }
        }
        Ok(())
    }

    /// Stable content hash of the canonical JSON encoding.
    pub fn content_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(json.as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// A named table of per-row numeric results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    /// First column is a sample size; plot it on a log axis.
    pub log_x: bool,
}

impl Table {
    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// A named pass/fail outcome with a human-readable detail line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

/// Everything a scenario run produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub scenario: String,
    pub timestamp: String,
    pub config_hash: String,
    pub seed: u64,
    pub tables: Vec<Table>,
    pub verdicts: Vec<Verdict>,
}

impl ResultRecord {
    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }
}

/// Run a scenario. Randomness derives from the config seed (or the
/// override); identical config and seed give identical numeric outputs.
pub fn run_scenario(cfg: &ScenarioConfig, seed_override: Option<u64>) -> Result<ResultRecord> {
    cfg.validate()?;
    let seed = RandomSeed(seed_override.unwrap_or(cfg.seed));
    let (tables, verdicts) = match cfg.kind {
        ScenarioKind::Recovery => run_recovery_flow(cfg, seed)?,
        ScenarioKind::Metrics => run_metrics_flow(cfg, seed)?,
        ScenarioKind::Adaptation => run_adaptation_flow(cfg, seed)?,
    };
    Ok(ResultRecord {
        scenario: cfg.name.clone(),
        timestamp: timestamp(),
        config_hash: cfg.content_hash(),
        seed: seed.0,
        tables,
        verdicts,
    })
}

fn sequence_for(cfg: &ScenarioConfig, seed: RandomSeed) -> Result<crate::recovery::SequenceData> {
    let target = cfg.target.as_ref().expect("validated").build()?;
    let precon = cfg.preconditioner.as_ref().expect("validated").clone();
    let n_grid = cfg.n_grid.clone().expect("validated");
    let gen_target = target.clone();
    let sequence = MeasureSequence::new(
        move |n, child| {
            let sample = if gen_target.dim() >= 2 {
                gen_target.sample_joint(n, child)?
            } else {
                gen_target.sample(n, child)?
            };
            precon.build(&sample, &gen_target)
        },
        n_grid,
        target,
        seed.child("sequence"),
    )?;
    sequence.realize()
}

fn run_recovery_flow(
    cfg: &ScenarioConfig,
    seed: RandomSeed,
) -> Result<(Vec<Table>, Vec<Verdict>)> {
    let seq = sequence_for(cfg, seed)?;
    let class = cfg.class.as_ref().expect("validated").build()?;
    let loss = cfg.loss.as_ref().expect("validated").build();
    let preset = cfg.preset.expect("validated");
    let tol = cfg.tolerances.unwrap_or_default();
    let report = flrs_verdict(&seq, &class, &loss, preset, tol)?;

    let mut tables = Vec::new();
    tables.push(Table {
        name: "mode_trajectory".into(),
        columns: vec!["n".into(), "distance".into()],
        rows: seq
            .n_grid
            .iter()
            .zip(&report.mode_trajectory)
            .map(|(&n, &d)| vec![n as f64, d])
            .collect(),
        log_x: true,
    });
    tables.push(Table {
        name: "minimizer_gaps".into(),
        columns: vec!["n".into(), "theta_gap".into(), "loss_gap".into()],
        rows: report
            .minimizer_gaps
            .iter()
            .map(|g| vec![g.n as f64, g.theta_gap, g.loss_gap])
            .collect(),
        log_x: true,
    });

    let mut verdicts = vec![
        Verdict {
            name: "mode_decrease".into(),
            pass: report.mode_decrease_ok,
            detail: format!(
                "first {:.6}, last {:.6}, factor {:.1} required (empirical)",
                report.mode_trajectory.first().unwrap(),
                report.mode_trajectory.last().unwrap(),
                tol.mode_decrease
            ),
        },
        Verdict {
            name: "fatou_margins".into(),
            pass: report.margins_ok,
            detail: format!(
                "liminf {:.6}, limsup {:.6}, tol -{:.0e} (empirical)",
                report.liminf_margin, report.limsup_margin, tol.margin_tol
            ),
        },
        Verdict {
            name: "minimizer_gaps_decrease".into(),
            pass: report.gaps_decrease_ok,
            detail: format!(
                "theta {:.6}->{:.6}, loss {:.6}->{:.6}, factor {:.1} (empirical)",
                report.minimizer_gaps.first().unwrap().theta_gap,
                report.minimizer_gaps.last().unwrap().theta_gap,
                report.minimizer_gaps.first().unwrap().loss_gap,
                report.minimizer_gaps.last().unwrap().loss_gap,
                tol.gap_decrease
            ),
        },
    ];

    if cfg.regression_bound {
        let rows = regression_tv_bound_check(&seq.measures, &seq.target)?;
        tables.push(Table {
            name: "regression_bound".into(),
            columns: vec![
                "n".into(),
                "gap".into(),
                "bound".into(),
                "tv".into(),
                "vacuous".into(),
            ],
            rows: seq
                .n_grid
                .iter()
                .zip(&rows)
                .map(|(&n, r)| {
                    vec![
                        n as f64,
                        r.gap,
                        r.bound,
                        r.tv,
                        if r.vacuous { 1.0 } else { 0.0 },
                    ]
                })
                .collect(),
            log_x: true,
        });
        verdicts.push(Verdict {
            name: "regression_tv_bound".into(),
            pass: rows.iter().all(|r| r.ok),
            detail: format!("{} rows, zero violations required", rows.len()),
        });
    }

    Ok((tables, verdicts))
}

fn run_metrics_flow(cfg: &ScenarioConfig, seed: RandomSeed) -> Result<(Vec<Table>, Vec<Verdict>)> {
    // Metric trajectories have no minimum length; build the measures
    // directly rather than through a recovery sequence.
    let target = cfg.target.as_ref().expect("validated").build()?;
    let precon = cfg.preconditioner.as_ref().expect("validated");
    let n_grid = cfg.n_grid.clone().expect("validated");
    let spec = cfg.metrics.as_ref().expect("validated");
    let mut rows = Vec::new();
    for (i, &n) in n_grid.iter().enumerate() {
        let child = seed.child("sequence").child_indexed("sequence", i as u64);
        let sample = if target.dim() >= 2 {
            target.sample_joint(n, child)?
        } else {
            target.sample(n, child)?
        };
        let m = precon.build(&sample, &target)?;
        let d = spec.mode.distance(&m, &target)?;
        rows.push(vec![n as f64, d]);
    }
    let first = rows.first().map(|r| r[1]).unwrap_or(0.0);
    let last = rows.last().map(|r| r[1]).unwrap_or(0.0);
    let mut verdicts = Vec::new();
    if let Some(bound) = spec.require_last_below {
        verdicts.push(Verdict {
            name: "last_below".into(),
            pass: last < bound,
            detail: format!("distance {last:.6} vs bound {bound:.6}"),
        });
    }
    if spec.require_decrease {
        verdicts.push(Verdict {
            name: "decrease".into(),
            pass: last < first,
            detail: format!("first {first:.6}, last {last:.6}"),
        });
    }
    let tables = vec![Table {
        name: "distance_trajectory".into(),
        columns: vec!["n".into(), "distance".into()],
        rows,
        log_x: true,
    }];
    Ok((tables, verdicts))
}

fn run_adaptation_flow(
    cfg: &ScenarioConfig,
    seed: RandomSeed,
) -> Result<(Vec<Table>, Vec<Verdict>)> {
    let class = cfg
        .class
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("adaptation scenarios need a class".into()))?
        .build()?;
    let loss = cfg
        .loss
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("adaptation scenarios need a loss".into()))?
        .build();
    match cfg.adaptation.as_ref().expect("validated") {
        AdaptationSpec::ConditionalTransfer {
            source,
            shift,
            eval_per_class,
            weighting,
            variant,
            min_accuracy,
            max_gap,
        } => {
            let src = source.draw(seed.child("source"))?;
            let target_spec = source.shifted(shift)?;
            let tgt = target_spec.draw(seed.child("target"))?;
            let mut eval_spec = target_spec;
            eval_spec.per_class = *eval_per_class;
            let eval = eval_spec.draw(seed.child("eval"))?;
            let pair = DomainPair::with_identity_classes(src, tgt)?;
            let (report, _) =
                run_conditional_transfer(&pair, &eval, &class, &loss, *weighting, *variant)?;
            let accuracy = report.accuracy.unwrap_or(0.0);
            let tables = vec![Table {
                name: "transfer".into(),
                columns: vec![
                    "dh".into(),
                    "adapted_loss".into(),
                    "oracle_loss".into(),
                    "gap".into(),
                    "accuracy".into(),
                ],
                rows: vec![vec![
                    report.dh,
                    report.adapted_loss,
                    report.oracle_loss,
                    report.gap,
                    accuracy,
                ]],
                log_x: false,
            }];
            let verdicts = vec![
                Verdict {
                    name: "accuracy".into(),
                    pass: accuracy >= *min_accuracy,
                    detail: format!("{accuracy:.4} vs required {min_accuracy:.4}"),
                },
                Verdict {
                    name: "oracle_gap".into(),
                    pass: report.gap <= *max_gap,
                    detail: format!("{:.4} vs allowed {max_gap:.4}", report.gap),
                },
            ];
            Ok((tables, verdicts))
        }
        AdaptationSpec::AffineRecovery {
            n,
            trials,
            max_condition,
            max_gap,
        } => {
            let mut rows = Vec::new();
            let mut all_identity = true;
            let mut worst_gap = 0.0f64;
            for t in 0..*trials {
                let trial_seed = seed.child_indexed("trial", t as u64);
                let p = class.feature_dim();
                let (a, b) = random_spd(p, *max_condition, trial_seed.child("map"));
                debug_assert!(is_symmetric_positive_definite(&a));
                let report =
                    affine_recovery_test(*n, &a, &b, &class, &loss, trial_seed.child("data"))?;
                all_identity &= report.identity_pairing;
                worst_gap = worst_gap.max(report.loss_gap);
                rows.push(vec![
                    t as f64,
                    if report.identity_pairing { 1.0 } else { 0.0 },
                    report.loss_gap,
                ]);
            }
            let tables = vec![Table {
                name: "affine_recovery".into(),
                columns: vec!["trial".into(), "identity".into(), "loss_gap".into()],
                rows,
                log_x: false,
            }];
            let verdicts = vec![
                Verdict {
                    name: "identity_pairing".into(),
                    pass: all_identity,
                    detail: format!("{trials} trials"),
                },
                Verdict {
                    name: "loss_gap".into(),
                    pass: worst_gap < *max_gap,
                    detail: format!("worst {worst_gap:.2e} vs allowed {max_gap:.2e}"),
                },
            ];
            Ok((tables, verdicts))
        }
        AdaptationSpec::BlurSweep {
            data,
            sigmas,
            accuracy_tol,
        } => {
            let joint = data.draw(seed.child("joint"))?;
            let report = blur_sweep(&joint, sigmas, &class, &loss)?;
            // Loss and accuracy land in separate tables, one curve each.
            let tables = vec![
                Table {
                    name: "blur_sweep".into(),
                    columns: vec!["sigma".into(), "loss".into(), "accuracy".into()],
                    rows: report
                        .rows
                        .iter()
                        .map(|r| vec![r.sigma, r.loss, r.accuracy])
                        .collect(),
                    log_x: false,
                },
                Table {
                    name: "blur_loss".into(),
                    columns: vec!["sigma".into(), "loss".into()],
                    rows: report.rows.iter().map(|r| vec![r.sigma, r.loss]).collect(),
                    log_x: false,
                },
                Table {
                    name: "blur_accuracy".into(),
                    columns: vec!["sigma".into(), "accuracy".into()],
                    rows: report
                        .rows
                        .iter()
                        .map(|r| vec![r.sigma, r.accuracy])
                        .collect(),
                    log_x: false,
                },
            ];
            let base = report.rows.last().expect("nonempty");
            let smallest_positive = &report.rows[report.rows.len() - 2];
            let acc_gap = (smallest_positive.accuracy - base.accuracy).abs();
            let verdicts = vec![
                Verdict {
                    name: "loss_gaps_monotone".into(),
                    pass: report.gaps_monotone,
                    detail: format!("gaps {:?} within 10% slack", report.loss_gaps),
                },
                Verdict {
                    name: "accuracy_convergence".into(),
                    pass: acc_gap <= *accuracy_tol,
                    detail: format!(
                        "|acc({}) - acc(0)| = {acc_gap:.4} vs {accuracy_tol:.4}",
                        smallest_positive.sigma
                    ),
                },
            ];
            Ok((tables, verdicts))
        }
    }
}

/// Random symmetric positive definite matrix with condition number at most
/// `max_condition`, plus a random shift.
pub fn random_spd(p: usize, max_condition: f64, seed: RandomSeed) -> (Vec<Vec<f64>>, Vec<f64>) {
    use rand::Rng;
    let mut rng = seed.rng();
    // Random rotation from Gram-Schmidt on a random matrix.
    let mut q: Vec<Vec<f64>> = (0..p)
        .map(|_| (0..p).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect())
        .collect();
    for i in 0..p {
        for j in 0..i {
            let dot: f64 = (0..p).map(|k| q[i][k] * q[j][k]).sum();
            for k in 0..p {
                q[i][k] -= dot * q[j][k];
            }
        }
        let norm: f64 = q[i].iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-9);
        for v in &mut q[i] {
            *v /= norm;
        }
    }
    // Eigenvalues in [1, max_condition].
    let eigs: Vec<f64> = (0..p)
        .map(|_| 1.0 + (max_condition - 1.0) * rng.gen::<f64>())
        .collect();
    let mut a = vec![vec![0.0; p]; p];
    for i in 0..p {
        for j in 0..p {
            for (k, &e) in eigs.iter().enumerate() {
                a[i][j] += q[k][i] * e * q[k][j];
            }
        }
    }
    let b: Vec<f64> = (0..p).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
    (a, b)
}

fn timestamp() -> String {
    use std::time::{SystemTime, UNIX_EPOCH};
    let secs = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!("unix:{secs}")
}

/// Write all outputs of a record into a directory: `record.json`, one CSV
/// and one SVG per table. Files are written to a temp name and renamed, so
/// a failed run leaves no partial outputs behind.
pub fn persist_record(record: &ResultRecord, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    let json = serde_json::to_string_pretty(record)?;
    written.push(write_atomic(&out_dir.join("record.json"), json.as_bytes())?);
    for table in &record.tables {
        written.push(write_atomic(
            &out_dir.join(format!("{}.csv", table.name)),
            table.to_csv().as_bytes(),
        )?);
    }
    for svg in emit_plots(record)? {
        written.push(write_atomic(&out_dir.join(svg.0), svg.1.as_bytes())?);
    }
    Ok(written)
}

/// One SVG per table: the first column is the x axis, every further column
/// a series.
pub fn emit_plots(record: &ResultRecord) -> Result<Vec<(String, String)>> {
    if record.tables.is_empty() {
        return Err(Error::EmptyInput("result record tables"));
    }
    let mut out = Vec::new();
    for table in &record.tables {
        if table.columns.len() < 2 || table.rows.is_empty() {
            continue;
        }
        let mut series_data: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
        for col in 1..table.columns.len() {
            let pts: Vec<(f64, f64)> = table.rows.iter().map(|r| (r[0], r[col])).collect();
            series_data.push((table.columns[col].clone(), pts));
        }
        let series: Vec<Series> = series_data
            .iter()
            .map(|(name, pts)| Series { name, points: pts })
            .collect();
        let svg = line_chart(
            &format!("{} / {}", record.scenario, table.name),
            &table.columns[0],
            "value",
            &series,
            table.log_x,
        )?;
        out.push((format!("{}.svg", table.name), svg));
    }
    if out.is_empty() {
        return Err(Error::EmptyInput("no plottable tables"));
    }
    Ok(out)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<PathBuf> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(path.to_path_buf())
}

/// Parse a sample from CSV text: one row per point, feature columns first,
/// the last column a label unless `labeled` is false.
pub fn sample_from_csv(text: &str, labeled: bool) -> Result<Sample> {
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let cells: Vec<f64> = line
            .split(',')
            .map(|c| {
                c.trim().parse::<f64>().map_err(|_| {
                    Error::InvalidConfig(format!("line {}: bad number `{c}`", lineno + 1))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        match width {
            None => width = Some(cells.len()),
            Some(w) if w != cells.len() => {
                return Err(Error::InvalidConfig(format!(
                    "line {}: expected {w} columns, got {}",
                    lineno + 1,
                    cells.len()
                )))
            }
            _ => {}
        }
        if labeled {
            if cells.len() < 2 {
                return Err(Error::InvalidConfig(
                    "labeled CSV needs at least two columns".into(),
                ));
            }
            let (feat, label) = cells.split_at(cells.len() - 1);
            features.push(Point::new(feat.to_vec())?);
            labels.push(label[0]);
        } else {
            features.push(Point::new(cells)?);
        }
    }
    if labeled {
        Sample::with_labels(features, Some(labels))
    } else {
        Sample::new(features)
    }
}

/// Render a labeled sample as CSV.
pub fn sample_to_csv(sample: &Sample) -> String {
    let mut out = String::new();
    for (i, p) in sample.features.iter().enumerate() {
        let mut cells: Vec<String> = p.0.iter().map(|v| format!("{v}")).collect();
        if let Some(labels) = &sample.labels {
            cells.push(format!("{}", labels[i]));
        }
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_recovery_config() -> ScenarioConfig {
        ScenarioConfig {
            name: "tiny".into(),
            seed: 1,
            kind: ScenarioKind::Recovery,
            out_dir: None,
            target: Some(TargetSpec::LinearJoint {
                slope: 2.0,
                intercept: 0.0,
                x_std: 0.5,
                x_box: (-1.2, 1.2),
                noise_std: 0.2,
                resolution: vec![10, 10],
            }),
            preconditioner: Some(PreconSpec::Kde {
                kernel: Kernel::Gaussian,
                bandwidth: BandwidthRule::PowerLaw { c: 0.4, alpha: 0.45 },
                resolution: None,
            }),
            n_grid: Some(vec![20, 60, 180, 540]),
            loss: Some(LossSpec {
                kind: LossKind::Squared,
                clip: Some(25.0),
                bound_m: None,
                lip_c: None,
            }),
            class: Some(ClassSpec {
                param_box: vec![(-5.0, 5.0), (-5.0, 5.0)],
                feature_box: vec![(-1.5, 1.5)],
            }),
            preset: Some(CasePreset::TvBounded),
            tolerances: None,
            regression_bound: true,
            metrics: None,
            adaptation: None,
        }
    }

    #[test]
    fn config_round_trips_through_toml_and_json() {
        let cfg = tiny_recovery_config();
        let toml_text = cfg.to_toml().unwrap();
        let back = ScenarioConfig::from_str_auto(&toml_text).unwrap();
        assert_eq!(back, cfg);

        let json_text = serde_json::to_string(&cfg).unwrap();
        let back = ScenarioConfig::from_str_auto(&json_text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn hash_stable_under_reserialization() {
        let cfg = tiny_recovery_config();
        let text = cfg.to_toml().unwrap();
        let back = ScenarioConfig::from_str_auto(&text).unwrap();
        assert_eq!(cfg.content_hash(), back.content_hash());
    }

    #[test]
    fn validation_catches_missing_sections() {
        let mut cfg = tiny_recovery_config();
        cfg.preset = None;
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(msg)) if msg.contains("preset")));
    }

    #[test]
    fn scenario_outputs_are_deterministic() {
        let cfg = tiny_recovery_config();
        let a = run_scenario(&cfg, None).unwrap();
        let b = run_scenario(&cfg, None).unwrap();
        assert_eq!(a.tables, b.tables);
        for (ta, tb) in a.tables.iter().zip(&b.tables) {
            assert_eq!(ta.to_csv(), tb.to_csv());
        }
        // A different seed changes the numbers.
        let c = run_scenario(&cfg, Some(99)).unwrap();
        assert_ne!(a.tables, c.tables);
    }

    #[test]
    fn persist_writes_complete_outputs() {
        let cfg = tiny_recovery_config();
        let record = run_scenario(&cfg, None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let written = persist_record(&record, dir.path()).unwrap();
        assert!(written.iter().any(|p| p.ends_with("record.json")));
        assert!(written.iter().any(|p| p.ends_with("mode_trajectory.csv")));
        assert!(written.iter().any(|p| p.ends_with("mode_trajectory.svg")));
        // No temp files left behind.
        for entry in std::fs::read_dir(dir.path()).unwrap() {
            let name = entry.unwrap().file_name();
            assert!(!name.to_string_lossy().ends_with(".tmp"));
        }
    }

    #[test]
    fn csv_sample_round_trip() {
        let text = "0.5,1.0,-1\n1.5,2.0,1\n";
        let s = sample_from_csv(text, true).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.dim(), 2);
        assert_eq!(s.labels.as_ref().unwrap(), &vec![-1.0, 1.0]);
        let back = sample_to_csv(&s);
        let s2 = sample_from_csv(&back, true).unwrap();
        assert_eq!(s, s2);
    }

    #[test]
    fn empty_record_has_no_plots() {
        let record = ResultRecord {
            scenario: "x".into(),
            timestamp: "unix:0".into(),
            config_hash: "0".into(),
            seed: 0,
            tables: vec![],
            verdicts: vec![],
        };
        assert!(emit_plots(&record).is_err());
    }
}
