//! Run the bundled kernel-smoothing recovery scenario: total variation to
//! the target drops, both Fatou margins stay inside tolerance, and the
//! empirical minimizers converge to the target minimizer.

use premeasure::scenario::{run_scenario, ScenarioConfig};
use std::path::Path;

fn main() -> anyhow::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/kde-tv-recovery.toml");
    let cfg = ScenarioConfig::load(&path)?;
    let record = run_scenario(&cfg, None)?;

    for table in &record.tables {
        println!("## {}", table.name);
        print!("{}", table.to_csv());
        println!();
    }
    for v in &record.verdicts {
        println!(
            "{} {}: {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.name,
            v.detail
        );
    }
    anyhow::ensure!(record.all_pass(), "scenario failed");
    Ok(())
}
