//! Cross-fitted nuisances and the doubly-robust value terms for a fixed policy.
//!
//! Compares the estimated extrapolation term against the same term computed
//! with the true conditional means and propensities.

use safe_rd::estimator::{
    compute_dr_scores, dr_component, fit_crossfit_nuisances, identified_component, make_folds, NuisanceConfig,
    OracleNuisances, DEFAULT_FOLDS,
};
use safe_rd::simlab::{generate, ScenarioId, ScenarioSpec};
use safe_rd::ThresholdPolicy;

fn main() -> safe_rd::Result<()> {
    let spec = ScenarioSpec::new(ScenarioId::B, 8000);
    let data = generate(&spec, 3);
    let design = data.design();
    let baseline = ThresholdPolicy::baseline(design);
    let policy = ThresholdPolicy::new(design, vec![-650.0, -640.0])?;

    let folds = make_folds(&data, DEFAULT_FOLDS, 3)?;
    let fitted = fit_crossfit_nuisances(&data, &folds, &NuisanceConfig::default())?;
    let scores = compute_dr_scores(&data, &fitted)?;

    let oracle = OracleNuisances::new(|x, g| spec.observed_mean(x, g), |x| spec.propensity(x).to_vec());
    let oracle_scores = compute_dr_scores(&data, &oracle)?;

    println!("policy {:?} vs baseline {:?}", policy.cutoffs(), baseline.cutoffs());
    println!("agreement term     {:.5}", identified_component(&data, &policy, &baseline));
    println!("DR term (fitted)   {:.5}", dr_component(&data, &policy, &baseline, &scores));
    println!("DR term (true m,e) {:.5}", dr_component(&data, &policy, &baseline, &oracle_scores));
    Ok(())
}
