//! Stability of the regression slope under measure pre-conditioning: after
//! standardizing the feature axis, |a_n - a| is bounded by 2 sup|xy| TV.

use premeasure::learning::regression_tv_bound_check;
use premeasure::recovery::MeasureSequence;
use premeasure::scenario::{PreconSpec, ScenarioConfig};
use premeasure::RandomSeed;
use std::path::Path;

fn main() -> anyhow::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/kde-tv-recovery.toml");
    let cfg = ScenarioConfig::load(&path)?;
    let target = cfg.target.as_ref().unwrap().build()?;
    let precon: PreconSpec = cfg.preconditioner.clone().unwrap();
    let gen_target = target.clone();
    let seq = MeasureSequence::new(
        move |n, seed| {
            let sample = gen_target.sample_joint(n, seed)?;
            precon.build(&sample, &gen_target)
        },
        cfg.n_grid.clone().unwrap(),
        target,
        RandomSeed(cfg.seed),
    )?
    .realize()?;

    let rows = regression_tv_bound_check(&seq.measures, &seq.target)?;
    println!(
        "{:>8} {:>12} {:>12} {:>10} {:>4}",
        "n", "|a_n - a|", "2 sup|xy| tv", "tv", "ok"
    );
    for (n, r) in seq.n_grid.iter().zip(&rows) {
        println!(
            "{n:>8} {:>12.6} {:>12.6} {:>10.5} {:>4}",
            r.gap, r.bound, r.tv, r.ok
        );
    }
    anyhow::ensure!(rows.iter().all(|r| r.ok), "a bound row failed");
    Ok(())
}
