//! Local linear and quadratic regression, plus one-sided boundary limits.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use safe_rd::smooth::{boundary_limit, fit_local_poly, LocalPolyConfig, Side};

fn main() -> safe_rd::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    // A curve with a jump of 0.5 at x = 0.
    let truth = |x: f64| (2.0 * x).sin() + if x >= 0.0 { 0.5 } else { 0.0 };
    let points: Vec<(f64, f64)> = (0..2000)
        .map(|_| {
            let x = rng.random_range(-2.0..2.0);
            (x, truth(x) + 0.2 * (rng.random::<f64>() - 0.5))
        })
        .collect();

    let fit = fit_local_poly(&points, LocalPolyConfig::quadratic())?;
    println!("quadratic fit, bandwidth {:.3}", fit.bandwidth());
    for q in [-1.5, -0.75, 0.75, 1.5] {
        let e = fit.eval(q)?;
        println!("  x = {q:5.2}: value {:.3} (true {:.3}), slope {:.3} (true {:.3})",
            e.value, truth(q), e.slope, 2.0 * (2.0 * q).cos());
    }

    let cfg = LocalPolyConfig::linear().with_bandwidth(0.3);
    let above = boundary_limit(&points, 0.0, Side::FromAbove, cfg)?;
    let below = boundary_limit(&points, 0.0, Side::FromBelow, cfg)?;
    println!("limits at 0: from below {below:.3}, from above {above:.3}, jump {:.3}", above - below);
    Ok(())
}
