//! Total variation convergence of the Parzen-window estimate toward a
//! standard normal, with the classical 1.06 n^(-1/5) bandwidth.

use premeasure::metrics::tv_distance;
use premeasure::precondition::{build_kde, BandwidthRule, Kernel};
use premeasure::scenario::TargetSpec;
use premeasure::RandomSeed;

fn main() -> premeasure::Result<()> {
    let target = TargetSpec::Gaussian {
        mean: 0.0,
        std: 1.0,
        box_: (-6.0, 6.0),
        resolution: 256,
    }
    .build()?;
    let grid = target.as_grid().expect("grid target").spec().clone();
    let bw = BandwidthRule::PowerLaw { c: 1.06, alpha: 0.2 };

    println!("{:>8} {:>10} {:>12}", "n", "H_n", "tv");
    for (i, n) in [100usize, 400, 1600, 10000].into_iter().enumerate() {
        let sample = target.sample(n, RandomSeed(0).child_indexed("draw", i as u64))?;
        let estimate = build_kde(&sample, Kernel::Gaussian, &bw, &grid)?;
        println!(
            "{n:>8} {:>10.4} {:>12.6}",
            bw.bandwidth(n),
            tv_distance(&estimate, &target)?
        );
    }
    Ok(())
}
