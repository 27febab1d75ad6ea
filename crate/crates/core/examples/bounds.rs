//! Difference curves, smoothness parameters and the resulting bounds on
//! unobserved cross-group differences.

use safe_rd::estimator::{fit_crossfit_nuisances, make_folds, NuisanceConfig, DEFAULT_FOLDS};
use safe_rd::idbounds::{fit_bound_curves, write_bounds_csv, BoundModel, DifferenceConfig};
use safe_rd::simlab::{generate, ScenarioId, ScenarioSpec};

fn main() -> safe_rd::Result<()> {
    let spec = ScenarioSpec::new(ScenarioId::B, 8000);
    let data = generate(&spec, 5);
    let design = data.design();
    let folds = make_folds(&data, DEFAULT_FOLDS, 5)?;
    let nuisances = fit_crossfit_nuisances(&data, &folds, &NuisanceConfig::default())?;
    let curves = fit_bound_curves(&data, &nuisances, &DifferenceConfig::default())?;

    for (key, lambda) in &curves.lambda {
        let anchor = design.cutoff(key.anchor());
        let true_gap = spec.potential_mean(key.w == 1, anchor, key.g) - spec.potential_mean(key.w == 1, anchor, key.g_ref);
        println!("{key}: boundary difference {:.4} (true {true_gap:.4}), lambda {lambda:.5}", curves.boundary[key]);
    }

    for m in [0.0, 1.0, 4.0] {
        let model = BoundModel::from_curves(design, &curves, m)?;
        let widths: Vec<String> = model.pairs().map(|(k, _)| format!("{k} width@-700 {:.4}", model.width(k, -700.0))).collect();
        println!("M = {m}: {}", widths.join(", "));
    }

    let model = BoundModel::from_curves(design, &curves, 1.0)?;
    let xs: Vec<f64> = (0..5).map(|i| -850.0 + 70.0 * i as f64).collect();
    write_bounds_csv(std::io::stdout(), design, &model, &xs)?;
    Ok(())
}
