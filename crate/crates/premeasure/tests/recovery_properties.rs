//! Recovery-system properties across the preset matrix, the disintegrated
//! double-sum estimate, per-step total-loss bounds, and path stress tests.

use premeasure::learning::{erm, Agent, LossFunction, LossKind};
use premeasure::measure::{gaussian_convolve, make_discrete, GridSpec, Point};
use premeasure::recovery::{
    check_liminf, desintegration_check, flrs_verdict, prop_list_check, CasePreset,
    MeasureSequence, RecoveryTolerances, SequenceData,
};
use premeasure::scenario::{PreconSpec, ScenarioConfig};
use premeasure::RandomSeed;
use std::path::{Path, PathBuf};

fn scenario_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("../../scenarios/{name}.toml"))
}

fn realize(name: &str) -> (ScenarioConfig, SequenceData) {
    let cfg = ScenarioConfig::load(&scenario_path(name)).unwrap();
    let target = cfg.target.as_ref().unwrap().build().unwrap();
    let precon: PreconSpec = cfg.preconditioner.clone().unwrap();
    let gen_target = target.clone();
    let seq = MeasureSequence::new(
        move |n, seed| {
            let sample = gen_target.sample_joint(n, seed).unwrap();
            precon.build(&sample, &gen_target)
        },
        cfg.n_grid.clone().unwrap(),
        target,
        RandomSeed(cfg.seed).child("sequence"),
    )
    .unwrap()
    .realize()
    .unwrap();
    (cfg, seq)
}

/// Deterministic Gaussian-blur sequence of a fixed discrete joint with
/// sigma_n shrinking like 1/n; serves the d1 preset. The atoms sit exactly
/// at cell centers of the blur grid, so the grid representation carries no
/// snapping floor and d1 genuinely heads to zero.
fn blur_sequence() -> SequenceData {
    // Grid [-3.5, 3.5] x [-6, 6] at 10 x 10: cell centers -3.5 + 0.7(i+0.5)
    // and -6 + 1.2(j+0.5).
    let atoms = vec![
        Point::from((-1.05, -1.8)),
        Point::from((-0.35, -0.6)),
        Point::from((0.35, 0.6)),
        Point::from((1.05, 1.8)),
        Point::from((1.75, 3.0)),
    ];
    let target = make_discrete(atoms, None).unwrap();
    let discrete = target.as_discrete().unwrap().clone();
    let grid = GridSpec::new(vec![(-3.5, 3.5), (-6.0, 6.0)], vec![10, 10]).unwrap();
    MeasureSequence::new(
        move |n, _| gaussian_convolve(&discrete, 1.0 / n as f64, &grid),
        vec![4, 8, 16, 32, 64],
        target,
        RandomSeed(0),
    )
    .unwrap()
    .realize()
    .unwrap()
}

#[test]
fn preset_matrix_on_fixed_scenarios() {
    // Three fixed scenarios cover the four presets: the kernel-smoothing
    // scenario passes the tv preset, the histogram scenario passes the
    // set-wise and weak presets, the blur sequence passes the d1 preset.
    let tol = RecoveryTolerances::default();

    let (cfg, seq) = realize("kde-tv-recovery");
    let class = cfg.class.as_ref().unwrap().build().unwrap();
    let loss = cfg.loss.as_ref().unwrap().build();
    let report = flrs_verdict(&seq, &class, &loss, CasePreset::TvBounded, tol).unwrap();
    assert!(report.pass, "tv preset: {report:?}");

    let (cfg, seq) = realize("histogram-setwise");
    let class = cfg.class.as_ref().unwrap().build().unwrap();
    let loss = cfg.loss.as_ref().unwrap().build();
    for preset in [CasePreset::SetwiseBounded, CasePreset::WeakUi] {
        let report = flrs_verdict(&seq, &class, &loss, preset, tol).unwrap();
        assert!(report.pass, "{preset:?}: margins {}/{} mode {:?}",
            report.liminf_margin, report.limsup_margin, report.mode_trajectory);
    }

    let seq = blur_sequence();
    let class = premeasure::learning::HypothesisClass::affine(
        vec![(-5.0, 5.0), (-5.0, 5.0)],
        vec![(-3.5, 3.5)],
    )
    .unwrap();
    let loss = LossFunction::clipped(LossKind::Squared, 25.0).with_lipschitz(60.0);
    let report = flrs_verdict(&seq, &class, &loss, CasePreset::D1Lipschitz, tol).unwrap();
    assert!(report.pass, "d1 preset: {report:?}");
}

#[test]
fn prop_list_bounds_hold_along_blur_sequence() {
    let seq = blur_sequence();
    let class = premeasure::learning::HypothesisClass::affine(
        vec![(-5.0, 5.0), (-5.0, 5.0)],
        vec![(-3.5, 3.5)],
    )
    .unwrap();
    let loss = LossFunction::clipped(LossKind::Squared, 25.0).with_lipschitz(60.0);
    let f = erm(&seq.target, &class, &loss).unwrap();
    let rows = prop_list_check(&seq, &f, &loss).unwrap();
    for row in &rows {
        assert!(row.ok, "bound violated at n = {}: {row:?}", row.n);
        // The blur sequence is mutually singular with the atomic target, so
        // the tv side is the vacuous 2M; the d1 side does the work.
        assert!(row.d1_bound.unwrap() < row.tv_bound.unwrap());
    }
}

#[test]
fn prop_list_lipschitz_bound_on_histogram_sequence() {
    // Logistic loss with a verified Lipschitz flag against the d1 bound.
    let (cfg, seq) = realize("histogram-setwise");
    let class = cfg.class.as_ref().unwrap().build().unwrap();
    let loss = LossFunction::plain(LossKind::Logistic)
        .with_bound(60.0)
        .with_lipschitz(30.0);
    loss.verify_flags(&class, (-4.5, 4.5), RandomSeed(3)).unwrap();
    let f = erm(&seq.target, &class, &loss).unwrap();
    let rows = prop_list_check(&seq, &f, &loss).unwrap();
    for row in rows {
        assert!(row.ok, "n = {}: lhs {} vs d1 {:?}", row.n, row.lhs, row.d1_bound);
    }
}

#[test]
fn random_paths_toward_the_minimizer_keep_margins() {
    // Five seeded paths with d(f_n, f*) = O(1/n) alongside the ERM path.
    let (cfg, seq) = realize("kde-tv-recovery");
    let class = cfg.class.as_ref().unwrap().build().unwrap();
    let loss = cfg.loss.as_ref().unwrap().build();
    let f_star = erm(&seq.target, &class, &loss).unwrap();
    for path_seed in 0..5u64 {
        use rand::Rng;
        let mut rng = RandomSeed(100 + path_seed).rng();
        let dir: Vec<f64> = (0..2).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        let path: Vec<Agent> = seq
            .n_grid
            .iter()
            .map(|&n| {
                let scale = 5.0 / n as f64;
                let theta: Vec<f64> = f_star
                    .theta
                    .iter()
                    .zip(&dir)
                    .map(|(t, d)| (t + scale * d).clamp(-5.0, 5.0))
                    .collect();
                Agent::new(class.clone(), theta).unwrap()
            })
            .collect();
        let margin = check_liminf(&seq, &path, &f_star, &loss).unwrap();
        assert!(margin >= -1e-2, "path seed {path_seed}: margin {margin}");
    }
}

#[test]
fn escaping_mass_is_reported_not_hidden() {
    // Adversarial sequence: shrinking mass on an atom running away, with an
    // unclipped squared loss. The margin goes negative and is reported.
    let base = [(-1.0, -1.0), (0.0, 0.1), (1.0, 0.9), (2.0, 2.1)];
    let target = make_discrete(base.iter().map(|&p| Point::from(p)).collect(), None).unwrap();
    let class = premeasure::learning::HypothesisClass::affine(
        vec![(-5.0, 5.0), (-5.0, 5.0)],
        vec![(-3.0, 3.0)],
    )
    .unwrap();
    let loss = LossFunction::plain(LossKind::Squared);
    let f = erm(&target, &class, &loss).unwrap();

    let n_grid = vec![10usize, 20, 40, 80];
    let mut measures = Vec::new();
    for &n in &n_grid {
        let mut pts: Vec<Point> = base.iter().map(|&p| Point::from(p)).collect();
        let mut ws = vec![(1.0 - 1.0 / n as f64) / 4.0; 4];
        pts.push(Point::from((0.0, 10.0 * (n as f64).sqrt())));
        ws.push(1.0 / n as f64);
        measures.push(make_discrete(pts, Some(ws)).unwrap());
    }
    let seq = SequenceData {
        measures,
        n_grid,
        target,
    };
    let (_, margin) = premeasure::recovery::build_recovery_sequence(&seq, &f, &loss).unwrap();
    assert!(margin < -1.0, "adversarial margin {margin} must be negative");
}

#[test]
fn desintegrated_double_sum_converges() {
    // Finite feature lattice with Gaussian conditionals, empirical marginal
    // and per-x kernel estimates: the double sum approaches the joint
    // expectation; the gap at the largest n stays below 5e-2.
    let lattice: Vec<f64> = (0..9).map(|i| -1.0 + 0.25 * i as f64).collect();
    let weights = vec![1.0 / 9.0; 9];
    let class = premeasure::learning::HypothesisClass::affine(
        vec![(-5.0, 5.0), (-5.0, 5.0)],
        vec![(-1.5, 1.5)],
    )
    .unwrap();
    let f = Agent::new(class, vec![1.5, 0.2]).unwrap();
    let loss = LossFunction::clipped(LossKind::Squared, 25.0);
    let rows = desintegration_check(
        &lattice,
        &weights,
        |x| 2.0 * x,
        0.5,
        &f,
        &loss,
        &[100, 400, 1600, 6400],
        RandomSeed(0),
    )
    .unwrap();
    for w in rows.windows(2) {
        // Not necessarily monotone, but the trend should not explode.
        assert!(w[1].gap < w[0].gap * 3.0 + 5e-2);
    }
    let last = rows.last().unwrap();
    assert!(last.gap < 5e-2, "gap at n = {}: {}", last.n, last.gap);
}
