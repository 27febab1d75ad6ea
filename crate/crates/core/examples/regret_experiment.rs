//! A small Monte Carlo regret study over both synthetic scenarios.
//!
//!     cargo run --release --example regret_experiment -- 40

use safe_rd::simlab::{regret_experiment, ExperimentConfig, ScenarioId};

fn main() -> safe_rd::Result<()> {
    let reps = std::env::args().nth(1).map_or(20, |s| s.parse().expect("reps must be an integer"));
    let cfg = ExperimentConfig {
        scenarios: vec![ScenarioId::A, ScenarioId::B],
        sizes: vec![1000, 4000],
        multipliers: vec![0.0, 1.0, 4.0],
        reps,
        mc_size: 200_000,
        ..ExperimentConfig::default()
    };
    let report = regret_experiment(&cfg)?;
    for t in &report.truths {
        println!("scenario {}: baseline value {:.4}, oracle value {:.4} at {:?}",
            t.scenario, t.baseline_value, t.oracle_value, t.oracle_cutoffs.iter().map(|c| c.round()).collect::<Vec<_>>());
    }
    println!("{:<3} {:>6} {:>4} {:>22} {:>22} {:>5}", "sc", "n", "M", "vs baseline (se)", "vs oracle (se)", "fail");
    for r in &report.rows {
        println!(
            "{:<3} {:>6} {:>4} {:>12.5} ({:.5}) {:>12.5} ({:.5}) {:>5}",
            r.scenario, r.n, r.multiplier, r.regret_baseline_mean, r.regret_baseline_se,
            r.regret_oracle_mean, r.regret_oracle_se, r.failures
        );
    }
    Ok(())
}
