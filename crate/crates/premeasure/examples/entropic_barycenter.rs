//! The entropically regularized barycenter has a Gibbs closed form; its
//! first variation is constant on the support, the optimality signature.

use premeasure::measure::{Point, Sample};
use premeasure::precondition::{
    build_entropic_barycenter, entropic_first_variation, EntropicConfig,
};
use premeasure::scenario::TargetSpec;

fn main() -> premeasure::Result<()> {
    let reference = TargetSpec::Gaussian {
        mean: 0.0,
        std: 1.0,
        box_: (-5.0, 5.0),
        resolution: 256,
    }
    .build()?;
    let nu = reference.as_grid().unwrap().clone();

    for lambda in [0.25, 1.0, 4.0] {
        let cfg = EntropicConfig::new(nu.clone(), lambda)?;
        let sample = Sample::new(vec![Point::from(0.0)])?;
        let bary = build_entropic_barycenter(&sample, &cfg)?;
        let g = bary.as_grid().unwrap();

        let fv = entropic_first_variation(g, &sample, &cfg)?;
        let finite: Vec<f64> = fv.into_iter().filter(|v| v.is_finite()).collect();
        let mean = finite.iter().sum::<f64>() / finite.len() as f64;
        let spread = finite
            .iter()
            .map(|v| (v - mean).abs())
            .fold(0.0f64, f64::max);

        // With a single atom at zero the density is a centered normal whose
        // variance solves lambda/(2 + lambda) of the reference variance.
        let sigma2 = lambda / (2.0 + lambda);
        println!(
            "lambda {lambda:>5.2}: density at 0 = {:.4} (expect {:.4}), first variation {:.4} +/- {:.2e}",
            g.density_at(&[0.0]),
            1.0 / (2.0 * std::f64::consts::PI * sigma2).sqrt(),
            mean,
            spread
        );
    }
    Ok(())
}
