//! Empirical verification of learner-recovery conditions: the two
//! Fatou-type inequalities, the preset convergence modes they pair with,
//! per-step total-loss bounds, and minimizer-convergence trajectories.
//!
//! Limits are proxied by extrema over the last third of the sample-size
//! grid; a finite run cannot certify a liminf. Every verdict is therefore
//! labeled empirical.

use crate::error::{Error, Result};
use crate::learning::{erm, total_loss, Agent, HypothesisClass, LossFunction};
use crate::measure::Measure;
use crate::metrics::{d1_dual, tv_distance, wasserstein_p, ConvergenceMode};
use crate::rng::RandomSeed;
use serde::{Deserialize, Serialize};

/// A sequence of pre-conditioned measures heading for a target: a generator
/// `(n, seed) -> Measure`, the sample sizes to probe, and the limit.
pub struct MeasureSequence {
    generator: Box<dyn Fn(usize, RandomSeed) -> Result<Measure>>,
    pub n_grid: Vec<usize>,
    pub target: Measure,
    pub seed: RandomSeed,
}

impl MeasureSequence {
    pub fn new(
        generator: impl Fn(usize, RandomSeed) -> Result<Measure> + 'static,
        n_grid: Vec<usize>,
        target: Measure,
        seed: RandomSeed,
    ) -> Result<Self> {
        if n_grid.len() < 4 {
            return Err(Error::InvalidConfig(
                "the sample-size grid needs at least 4 entries".into(),
            ));
        }
        if n_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig(
                "the sample-size grid must be strictly increasing".into(),
            ));
        }
        Ok(MeasureSequence {
            generator: Box::new(generator),
            n_grid,
            target,
            seed,
        })
    }

    /// Generate the measures; `i`-th entry uses the `i`-th child seed.
    pub fn realize(&self) -> Result<SequenceData> {
        let mut measures = Vec::with_capacity(self.n_grid.len());
        for (i, &n) in self.n_grid.iter().enumerate() {
            measures.push((self.generator)(
                n,
                self.seed.child_indexed("sequence", i as u64),
            )?);
        }
        Ok(SequenceData {
            measures,
            n_grid: self.n_grid.clone(),
            target: self.target.clone(),
        })
    }
}

/// A realized sequence: concrete measures, their sample sizes, the target.
#[derive(Debug, Clone)]
pub struct SequenceData {
    pub measures: Vec<Measure>,
    pub n_grid: Vec<usize>,
    pub target: Measure,
}

impl SequenceData {
    fn last_third(&self) -> usize {
        self.measures.len() - self.measures.len().div_ceil(3)
    }
}

/// The four recovery-system presets: each pairs a convergence mode with the
/// loss regularity it needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CasePreset {
    /// Set-wise convergence, bounded continuous loss.
    SetwiseBounded,
    /// Weak convergence, uniformly integrable loss family (certified here
    /// through a uniform bound).
    WeakUi,
    /// d_1 convergence, uniformly Lipschitz and bounded loss.
    D1Lipschitz,
    /// Total-variation convergence, bounded loss.
    TvBounded,
}

impl CasePreset {
    pub fn mode(self) -> ConvergenceMode {
        match self {
            CasePreset::SetwiseBounded => ConvergenceMode::Setwise,
            CasePreset::WeakUi => ConvergenceMode::Weak,
            CasePreset::D1Lipschitz => ConvergenceMode::D1,
            CasePreset::TvBounded => ConvergenceMode::Tv,
        }
    }

    /// Check that the loss carries the flags the preset requires.
    pub fn check_flags(self, loss: &LossFunction) -> Result<()> {
        let need_bound = true; // every preset here certifies through a bound
        let need_lip = matches!(self, CasePreset::D1Lipschitz);
        if need_bound && loss.bound_m.is_none() {
            return Err(Error::MissingFlag("bound_m"));
        }
        if need_lip && loss.lip_c.is_none() {
            return Err(Error::MissingFlag("lip_c"));
        }
        Ok(())
    }
}

/// Margin tolerance and decrease factors of the empirical verdict. The
/// defaults come from pilot runs; scenarios may override them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryTolerances {
    pub margin_tol: f64,
    pub mode_decrease: f64,
    pub gap_decrease: f64,
}

impl Default for RecoveryTolerances {
    fn default() -> Self {
        RecoveryTolerances {
            margin_tol: 1e-2,
            mode_decrease: 10.0,
            gap_decrease: 5.0,
        }
    }
}

/// Fatou condition 1, restricted to the observable tail: the minimum over
/// the last third of the grid of `E_{pi_n}[L(f_n)] - E_pi[L(f)]`. The
/// condition holds empirically when the margin is no smaller than `-tol`.
///
/// The path must align with the grid and must head toward `f_limit` in the
/// class metric (nonincreasing distances up to 10% slack).
pub fn check_liminf(
    seq: &SequenceData,
    f_path: &[Agent],
    f_limit: &Agent,
    loss: &LossFunction,
) -> Result<f64> {
    if f_path.len() != seq.measures.len() {
        return Err(Error::LengthMismatch(format!(
            "{} agents for {} measures",
            f_path.len(),
            seq.measures.len()
        )));
    }
    let class = &f_limit.class;
    let dists: Vec<f64> = f_path
        .iter()
        .map(|f| class.agent_distance(f, f_limit))
        .collect();
    for w in dists.windows(2) {
        if w[1] > 1.1 * w[0] + 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "path distances to the limit must not increase: {} -> {}",
                w[0], w[1]
            )));
        }
    }
    let limit_loss = total_loss(&seq.target, f_limit, loss)?;
    let start = seq.last_third();
    let mut margin = f64::INFINITY;
    for i in start..seq.measures.len() {
        let v = total_loss(&seq.measures[i], &f_path[i], loss)?;
        margin = margin.min(v - limit_loss);
    }
    Ok(margin)
}

/// Fatou condition 2 via the constant recovery path `f_j = f` (the path the
/// preset analyses use): returns the path and the margin
/// `E_pi[L(f)] - max over the last third of E_{pi_j}[L(f)]`.
pub fn build_recovery_sequence(
    seq: &SequenceData,
    f: &Agent,
    loss: &LossFunction,
) -> Result<(Vec<Agent>, f64)> {
    let limit_loss = total_loss(&seq.target, f, loss)?;
    let start = seq.last_third();
    let mut worst = f64::NEG_INFINITY;
    for m in &seq.measures[start..] {
        worst = worst.max(total_loss(m, f, loss)?);
    }
    let path = vec![f.clone(); seq.measures.len()];
    Ok((path, limit_loss - worst))
}

/// Per-step minimizer gaps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MinimizerGap {
    pub n: usize,
    /// Class-metric distance d(f_n, f*).
    pub theta_gap: f64,
    /// |E_{pi_n}[L(f_n)] - E_pi[L(f*)]|.
    pub loss_gap: f64,
}

/// The empirical verdict on a recovery run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub preset: CasePreset,
    pub n_grid: Vec<usize>,
    pub mode_trajectory: Vec<f64>,
    pub liminf_margin: f64,
    pub limsup_margin: f64,
    pub minimizer_gaps: Vec<MinimizerGap>,
    pub tolerances: RecoveryTolerances,
    pub mode_decrease_ok: bool,
    pub margins_ok: bool,
    pub gaps_decrease_ok: bool,
    pub pass: bool,
    /// Always true: the verdict extrapolates from finitely many n.
    pub empirical: bool,
}

fn decreased(first: f64, last: f64, factor: f64) -> bool {
    last * factor <= first + 1e-12
}

/// Run the full empirical recovery check for a preset: mode convergence of
/// the measures, the liminf condition along the ERM path, the recovery
/// sequence at the target minimizer, and the minimizer-gap trajectories.
pub fn flrs_verdict(
    seq: &SequenceData,
    class: &HypothesisClass,
    loss: &LossFunction,
    preset: CasePreset,
    tol: RecoveryTolerances,
) -> Result<RecoveryReport> {
    preset.check_flags(loss)?;
    let mode = preset.mode();
    let mut mode_trajectory = Vec::with_capacity(seq.measures.len());
    for m in &seq.measures {
        mode_trajectory.push(mode.distance(m, &seq.target)?);
    }

    let f_star = erm(&seq.target, class, loss)?;
    let limit_loss = total_loss(&seq.target, &f_star, loss)?;
    let mut erm_path = Vec::with_capacity(seq.measures.len());
    for m in &seq.measures {
        erm_path.push(erm(m, class, loss)?);
    }

    // Condition 1 along the ERM path (the path the minimizer argument uses).
    let start = seq.last_third();
    let mut liminf_margin = f64::INFINITY;
    for i in start..seq.measures.len() {
        let v = total_loss(&seq.measures[i], &erm_path[i], loss)?;
        liminf_margin = liminf_margin.min(v - limit_loss);
    }
    // Condition 2 with the constant path at the target minimizer.
    let (_, limsup_margin) = build_recovery_sequence(seq, &f_star, loss)?;

    let mut minimizer_gaps = Vec::with_capacity(seq.measures.len());
    for (i, m) in seq.measures.iter().enumerate() {
        let theta_gap = class.agent_distance(&erm_path[i], &f_star);
        let loss_gap = (total_loss(m, &erm_path[i], loss)? - limit_loss).abs();
        minimizer_gaps.push(MinimizerGap {
            n: seq.n_grid[i],
            theta_gap,
            loss_gap,
        });
    }

    let mode_decrease_ok = decreased(
        mode_trajectory[0],
        *mode_trajectory.last().expect("nonempty"),
        tol.mode_decrease,
    );
    let margins_ok = liminf_margin >= -tol.margin_tol && limsup_margin >= -tol.margin_tol;
    let gaps_decrease_ok = decreased(
        minimizer_gaps[0].theta_gap,
        minimizer_gaps.last().expect("nonempty").theta_gap,
        tol.gap_decrease,
    ) && decreased(
        minimizer_gaps[0].loss_gap,
        minimizer_gaps.last().expect("nonempty").loss_gap,
        tol.gap_decrease,
    );

    Ok(RecoveryReport {
        preset,
        n_grid: seq.n_grid.clone(),
        mode_trajectory,
        liminf_margin,
        limsup_margin,
        minimizer_gaps,
        tolerances: tol,
        mode_decrease_ok,
        margins_ok,
        gaps_decrease_ok,
        pass: mode_decrease_ok && margins_ok && gaps_decrease_ok,
        empirical: true,
    })
}

/// One row of the per-step total-loss bound table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PropListRow {
    pub n: usize,
    /// |E_{pi_n}[L(f)] - E_pi[L(f)]|.
    pub lhs: f64,
    /// 2 boundM TV(pi_n, pi), when the bound flag is present.
    pub tv_bound: Option<f64>,
    /// lipC d_1(pi_n, pi), when the Lipschitz flag is present.
    pub d1_bound: Option<f64>,
    pub ok: bool,
}

/// Check the per-step total-loss bounds along the sequence for a fixed
/// agent: the bounded-loss TV bound and the Lipschitz d_1 bound, whichever
/// flags the loss carries. Requires at least one flag.
pub fn prop_list_check(
    seq: &SequenceData,
    f: &Agent,
    loss: &LossFunction,
) -> Result<Vec<PropListRow>> {
    if loss.bound_m.is_none() && loss.lip_c.is_none() {
        return Err(Error::MissingFlag("bound_m or lip_c"));
    }
    let limit_loss = total_loss(&seq.target, f, loss)?;
    let mut rows = Vec::with_capacity(seq.measures.len());
    for (i, m) in seq.measures.iter().enumerate() {
        let lhs = (total_loss(m, f, loss)? - limit_loss).abs();
        let tv_bound = match loss.bound_m {
            Some(b) => Some(2.0 * b * tv_distance(m, &seq.target)?),
            None => None,
        };
        let d1_bound = match loss.lip_c {
            Some(c) => Some(c * wasserstein_p(m, &seq.target, 1)?),
            None => None,
        };
        let ok = tv_bound.map_or(true, |b| lhs <= b + 1e-9)
            && d1_bound.map_or(true, |b| lhs <= b + 1e-9);
        rows.push(PropListRow {
            n: seq.n_grid[i],
            lhs,
            tv_bound,
            d1_bound,
            ok,
        });
    }
    Ok(rows)
}

/// One row of the disintegration check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesintegrationRow {
    pub n: usize,
    /// `sum_x mu_n(x) int L(f(x), y) d nu_n^x(y)` with estimated pieces.
    pub double_sum: f64,
    /// `E_pi[L(f)]` under the true conditional structure.
    pub reference: f64,
    pub gap: f64,
}

/// Estimate the joint expectation through the disintegrated double sum: a
/// finite feature lattice with Gaussian conditionals `nu_x = N(g(x), s^2)`,
/// an empirical feature marginal, and a per-x kernel estimate of the
/// conditional. The double sum converges to the joint expectation.
pub fn desintegration_check(
    x_lattice: &[f64],
    mu_weights: &[f64],
    g: impl Fn(f64) -> f64,
    cond_std: f64,
    f: &Agent,
    loss: &LossFunction,
    n_grid: &[usize],
    seed: RandomSeed,
) -> Result<Vec<DesintegrationRow>> {
    use crate::measure::{gaussian_convolve, make_discrete, DiscreteMeasure, GridSpec, Point};
    use rand::Rng;

    if x_lattice.len() != mu_weights.len() {
        return Err(Error::LengthMismatch("lattice vs weights".into()));
    }
    // Reference conditionals on a shared y-grid per lattice point.
    let y_span = 6.0 * cond_std;
    let cond_grid = |center: f64| -> Result<GridSpec> {
        GridSpec::new(vec![(center - y_span, center + y_span)], vec![128])
    };
    let cond_expectation = |x: f64, density: &Measure| -> Result<f64> {
        density.moment(crate::measure::Integrand::Custom(&|c: &[f64]| {
            loss.eval(f.predict(&[x]), c[0])
        }))
    };

    let mut reference = 0.0;
    for (&x, &w) in x_lattice.iter().zip(mu_weights) {
        let atom = DiscreteMeasure::new(vec![Point::from(g(x))], None)?;
        let nu_x = gaussian_convolve(&atom, cond_std, &cond_grid(g(x))?)?;
        reference += w * cond_expectation(x, &nu_x)?;
    }

    let mu = make_discrete(
        x_lattice.iter().map(|&x| Point::from(x)).collect(),
        Some(mu_weights.to_vec()),
    )?;

    let mut rows = Vec::with_capacity(n_grid.len());
    for (step, &n) in n_grid.iter().enumerate() {
        let step_seed = seed.child_indexed("desintegration", step as u64);
        // Empirical feature marginal on the lattice.
        let feature_draws = mu.sample(n, step_seed.child("features"))?;
        let mut counts = vec![0usize; x_lattice.len()];
        for p in &feature_draws.features {
            let k = x_lattice
                .iter()
                .position(|&x| (x - p.0[0]).abs() < 1e-9)
                .expect("draws live on the lattice");
            counts[k] += 1;
        }
        // Per-x kernel estimate of the conditional from n fresh draws.
        let mut double_sum = 0.0;
        for (k, &x) in x_lattice.iter().enumerate() {
            if counts[k] == 0 {
                continue;
            }
            let mut rng = step_seed.child_indexed("conditional", k as u64).rng();
            let center = g(x);
            let draws: Vec<Point> = (0..n)
                .map(|_| {
                    // Box-Muller from two uniforms keeps the dependency
                    // surface small and the stream reproducible.
                    let u1: f64 = rng.gen::<f64>().max(1e-12);
                    let u2: f64 = rng.gen();
                    let z = (-2.0 * u1.ln()).sqrt()
                        * (2.0 * std::f64::consts::PI * u2).cos();
                    Point::from(center + cond_std * z)
                })
                .collect();
            let sample = crate::measure::Sample::new(draws)?;
            let h = crate::precondition::BandwidthRule::PowerLaw { c: 1.06, alpha: 0.2 };
            let nu_n_x = crate::precondition::build_kde(
                &sample,
                crate::precondition::Kernel::Gaussian,
                &h,
                &cond_grid(center)?,
            )?;
            double_sum += (counts[k] as f64 / n as f64) * cond_expectation(x, &nu_n_x)?;
        }
        rows.push(DesintegrationRow {
            n,
            double_sum,
            reference,
            gap: (double_sum - reference).abs(),
        });
    }
    Ok(rows)
}

/// d_1 evaluated on desk-scale supports; used by tests that need the raw
/// dual value rather than a mode dispatch.
pub fn d1_for_tests(a: &Measure, b: &Measure) -> Result<f64> {
    d1_dual(a, b)
}
