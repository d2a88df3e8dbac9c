//! When the target domain is an affine deformation of the source (symmetric
//! positive definite A), quadratic-cost transport recovers the pairing
//! exactly and the adapted agent matches the source optimum.

use premeasure::adaptation::affine_recovery_test;
use premeasure::learning::{HypothesisClass, LossFunction, LossKind};
use premeasure::scenario::random_spd;
use premeasure::RandomSeed;

fn main() -> premeasure::Result<()> {
    let class = HypothesisClass::affine(
        vec![(-8.0, 8.0), (-8.0, 8.0), (-8.0, 8.0)],
        vec![(-12.0, 12.0), (-12.0, 12.0)],
    )?;
    let loss = LossFunction::plain(LossKind::Squared);

    println!("{:>6} {:>10} {:>14}", "trial", "identity", "loss gap");
    for t in 0..8u64 {
        let seed = RandomSeed(0).child_indexed("trial", t);
        let (a, b) = random_spd(2, 10.0, seed.child("map"));
        let report = affine_recovery_test(32, &a, &b, &class, &loss, seed.child("data"))?;
        println!(
            "{t:>6} {:>10} {:>14.3e}",
            report.identity_pairing, report.loss_gap
        );
    }
    Ok(())
}
