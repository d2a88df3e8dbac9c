//! Gaussian-blur pre-conditioning sweep: train on blurred feature marginals
//! and watch loss and accuracy converge to the unblurred fit as sigma -> 0.

use premeasure::adaptation::blur_sweep;
use premeasure::scenario::{AdaptationSpec, ScenarioConfig};
use premeasure::RandomSeed;
use std::path::Path;

fn main() -> anyhow::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/blur-sweep.toml");
    let cfg = ScenarioConfig::load(&path)?;
    let class = cfg.class.as_ref().unwrap().build()?;
    let loss = cfg.loss.as_ref().unwrap().build();
    let Some(AdaptationSpec::BlurSweep { data, sigmas, .. }) = &cfg.adaptation else {
        anyhow::bail!("unexpected scenario shape");
    };
    let joint = data.draw(RandomSeed(cfg.seed).child("joint"))?;
    let report = blur_sweep(&joint, sigmas, &class, &loss)?;

    println!("{:>8} {:>12} {:>10}", "sigma", "loss", "accuracy");
    for row in &report.rows {
        println!("{:>8} {:>12.6} {:>10.4}", row.sigma, row.loss, row.accuracy);
    }
    println!(
        "\n|loss(sigma) - loss(0)| nonincreasing within {:.0}% slack: {}",
        report.slack * 100.0,
        report.gaps_monotone
    );
    Ok(())
}
