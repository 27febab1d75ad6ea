//! End-to-end safe policy learning, scored against the true policy value.

use safe_rd::learner::{learn_policy, LearnConfig};
use safe_rd::simlab::{generate, ScenarioId, ScenarioSpec, ValueOracle};
use safe_rd::ThresholdPolicy;

fn main() -> safe_rd::Result<()> {
    let spec = ScenarioSpec::new(ScenarioId::B, 8000);
    let data = generate(&spec, 21);
    let oracle = ValueOracle::new(&spec, 200_000, 1)?;
    let baseline = ThresholdPolicy::baseline(data.design());

    for m in [0.0, 1.0, 4.0] {
        let learned = learn_policy(&data, &LearnConfig { multiplier: m, seed: 21, ..LearnConfig::default() })?;
        println!(
            "M = {m}: cutoffs {:?}, worst-case gain {:+.5}, true gain {:+.5}",
            learned.policy.cutoffs().iter().map(|c| c.round()).collect::<Vec<_>>(),
            learned.breakdown.total - learned.baseline_breakdown.total,
            oracle.value(&learned.policy, 0.0) - oracle.value(&baseline, 0.0),
        );
        for t in &learned.tables {
            println!("    group {}: {} -> {:.1}", data.design().label(t.group), t.baseline_cutoff, t.learned_cutoff);
        }
    }
    Ok(())
}
