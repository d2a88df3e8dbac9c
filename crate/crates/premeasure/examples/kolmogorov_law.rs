//! The scaled Kolmogorov-Smirnov statistic converges in law to the supremum
//! of a Brownian bridge; compare the Monte-Carlo CDF of sqrt(n) D_n with the
//! alternating-series limit law.

use premeasure::metrics::{kolmogorov_limit_cdf, ks_statistic};
use premeasure::RandomSeed;
use rand::Rng;

fn main() -> premeasure::Result<()> {
    let n = 2000usize;
    let replicates = 500usize;
    let mut stats = Vec::with_capacity(replicates);
    for r in 0..replicates {
        let mut rng = RandomSeed(0).child_indexed("replicate", r as u64).rng();
        let xs: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let d = ks_statistic(&xs, |t| t.clamp(0.0, 1.0))?;
        stats.push((n as f64).sqrt() * d);
    }
    stats.sort_by(|a, b| a.partial_cmp(b).expect("finite"));

    println!("{:>6} {:>12} {:>12}", "b", "empirical", "series");
    let mut sup = 0.0f64;
    for (i, &b) in stats.iter().enumerate() {
        let emp_lo = i as f64 / replicates as f64;
        let emp_hi = (i + 1) as f64 / replicates as f64;
        let k = kolmogorov_limit_cdf(b)?;
        sup = sup.max((k - emp_lo).abs()).max((k - emp_hi).abs());
    }
    for b in [0.5, 0.8, 1.0, 1.2, 1.5, 2.0] {
        let emp = stats.iter().filter(|&&s| s < b).count() as f64 / replicates as f64;
        println!("{b:>6.2} {emp:>12.4} {:>12.4}", kolmogorov_limit_cdf(b)?);
    }
    println!("\nsup-norm distance over the sample points: {sup:.4}");
    println!("series value at b = 1.0: {:.6}", kolmogorov_limit_cdf(1.0)?);
    Ok(())
}
