//! Every pre-conditioner applied to one 2-D sample: empirical, histogram,
//! kernel estimate, convex hull, barycenters, and the MMD-relaxed plan.

use premeasure::measure::{GridSpec, Integrand, Point, Sample};
use premeasure::metrics::MmdKernel;
use premeasure::precondition::*;
use premeasure::scenario::TargetSpec;
use premeasure::transport::CostSpec;
use premeasure::RandomSeed;

fn describe(name: &str, m: &premeasure::Measure) -> premeasure::Result<()> {
    let mean = m.mean();
    println!(
        "{name:<24} mass {:>8.5}  mean ({:+.3}, {:+.3})  {}",
        m.moment(Integrand::One)?,
        mean[0],
        mean[1],
        match m {
            premeasure::Measure::Discrete(d) => format!("{} atoms", d.len()),
            premeasure::Measure::Grid(g) => format!("{:?} grid", g.spec().resolution),
        }
    );
    Ok(())
}

fn main() -> premeasure::Result<()> {
    let target = TargetSpec::UniformBox {
        box_: vec![(-1.0, 1.0), (-1.0, 1.0)],
        resolution: vec![32, 32],
    }
    .build()?;
    let sample = target.sample(200, RandomSeed(5))?;

    describe("empirical", &build_empirical(&sample)?)?;

    let bins = GridSpec::new(vec![(-1.0, 1.0), (-1.0, 1.0)], vec![8, 8])?;
    describe("histogram", &build_histogram(&sample, &bins)?)?;

    let grid = GridSpec::new(vec![(-1.6, 1.6), (-1.6, 1.6)], vec![48, 48])?;
    let kde = build_kde(
        &sample,
        Kernel::Epanechnikov,
        &BandwidthRule::PowerLaw { c: 1.0, alpha: 0.25 },
        &grid,
    )?;
    describe("kde (epanechnikov)", &kde)?;

    describe("convex hull uniform", &build_convex_hull_uniform(&sample, 64)?)?;
    describe("wasserstein barycenter", &build_wasserstein_barycenter(&sample)?)?;

    // Entropic barycenter of a small 1-D sub-sample.
    let xs = Sample::new(vec![Point::from(-0.5), Point::from(0.75)])?;
    let reference = TargetSpec::Gaussian {
        mean: 0.0,
        std: 1.0,
        box_: (-5.0, 5.0),
        resolution: 256,
    }
    .build()?;
    let cfg = EntropicConfig::new(reference.as_grid().unwrap().clone(), 1.0)?;
    let bary = build_entropic_barycenter(&xs, &cfg)?;
    println!(
        "entropic barycenter       mass {:>8.5}  1-D mean {:+.4}",
        bary.moment(Integrand::One)?,
        bary.mean()[0]
    );

    // MMD-relaxed plan between two tiny samples.
    let src = Sample::new(vec![Point::from(0.0), Point::from(1.0)])?;
    let tgt = Sample::new(vec![Point::from(0.3), Point::from(1.4)])?;
    let plan = build_mmd_plan(
        &src,
        &tgt,
        &MmdPlanConfig {
            kernel: MmdKernel::default(),
            lambda1: 50.0,
            lambda2: 50.0,
            cost: CostSpec::Quadratic,
        },
    )?;
    println!(
        "mmd-relaxed plan          objective {:.6} after {} steps (marginals relaxed: {})",
        plan.objective,
        plan.iterations,
        plan.plan.marginals_relaxed()
    );
    Ok(())
}
