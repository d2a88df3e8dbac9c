//! Exact transport plans, entropic plans, barycentric maps, and inversion.

use premeasure::measure::{DiscreteMeasure, Point};
use premeasure::transport::*;
use rand::Rng;

fn uniform(xs: &[f64]) -> DiscreteMeasure {
    DiscreteMeasure::new(xs.iter().map(|&x| Point::from(x)).collect(), None).unwrap()
}

fn main() -> premeasure::Result<()> {
    // Monotone matching in one dimension.
    let a = uniform(&[0.0, 1.0]);
    let b = uniform(&[2.0, 3.0]);
    let plan = solve_exact_ot(&a, &b, &CostSpec::Quadratic)?;
    println!("exact cost (uniform pair, quadratic): {}", plan.cost());

    // The entropic plan approaches the exact one as epsilon shrinks.
    let mut rng = premeasure::RandomSeed(2).rng();
    let xs: Vec<f64> = (0..6).map(|_| rng.gen::<f64>()).collect();
    let ys: Vec<f64> = (0..6).map(|_| 2.0 + rng.gen::<f64>()).collect();
    let (a, b) = (uniform(&xs), uniform(&ys));
    let exact = solve_exact_ot(&a, &b, &CostSpec::Quadratic)?;
    println!("\n{:>8} {:>12}", "epsilon", "cost");
    println!("{:>8} {:>12.6}  (exact)", "-", exact.cost());
    for eps in [1.0, 0.1, 0.01] {
        let plan = solve_sinkhorn(&a, &b, &CostSpec::Quadratic, eps)?;
        println!("{eps:>8} {:>12.6}", plan.cost());
    }

    // Deterministic plans invert exactly; a merged row falls back to the
    // reverse-direction plan and is flagged.
    let map = barycentric_map(&exact)?;
    println!("\nforward map deterministic: {}", map.deterministic);
    let inverse = invert_map(&map, || solve_exact_ot(&b, &a, &CostSpec::Quadratic))?;
    println!("inverse approximate: {}", inverse.approximate_inverse);
    let x = xs[0];
    let there = map.apply_nearest(&[x]);
    let back = inverse.apply_nearest(&there.0);
    println!("round trip {x:+.4} -> {:+.4} -> {:+.4}", there.0[0], back.0[0]);

    // Hungarian as an independent check on an assignment instance.
    let cost = CostSpec::Quadratic.matrix(a.support(), b.support())?;
    let (_, assign_cost) = hungarian::solve(&cost)?;
    println!(
        "\nnetwork simplex {:+.9} vs hungarian {:+.9}",
        exact.cost(),
        assign_cost / xs.len() as f64
    );
    Ok(())
}
