//! Sweeping the smoothness multiplier and the treatment cost while reusing
//! one set of fitted nuisances and difference curves.

use safe_rd::learner::{sensitivity_sweep, FittedPipeline, LearnConfig};
use safe_rd::simlab::{generate, ScenarioId, ScenarioSpec};

fn main() -> safe_rd::Result<()> {
    let data = generate(&ScenarioSpec::new(ScenarioId::B, 6000), 9);
    let pipeline = FittedPipeline::fit(&data, &LearnConfig { seed: 9, ..LearnConfig::default() })?;
    let rows = sensitivity_sweep(&pipeline, &[0.0, 0.5, 1.0, 2.0, 8.0], &[0.0, 0.9])?;
    println!("{:<8} {:>5} {:>5} {:>10} {:>10} {:>9}", "group", "M", "C", "baseline", "learned", "gain");
    for r in rows {
        println!(
            "{:<8} {:>5} {:>5} {:>10.1} {:>10.1} {:>9.5}",
            r.group, r.multiplier, r.cost, r.baseline_cutoff, r.learned_cutoff, r.objective_gain
        );
    }
    Ok(())
}
