//! A small replicated experiment: the mean range capacity in d = 4.

use latcap::experiments::{run_experiment, ExperimentConfig, ExperimentId};
use latcap::GreenTable;

fn main() -> latcap::Result<()> {
    let mut cfg = ExperimentConfig::new(ExperimentId::MeanScaling, 4, "2^6..2^10")?;
    cfg.set("replicas", "8")?.set("seed", "42")?;
    let out = run_experiment(&cfg, &GreenTable::new(4)?)?;
    print!("{}", out.summary_csv());
    for c in &out.checks {
        println!(
            "{}: {} ({})",
            c.name,
            if c.passed { "pass" } else { "fail" },
            c.detail
        );
    }
    println!("config sha256 {}", out.config_hash);
    Ok(())
}
