//! Kernel-weighted local polynomial regression of degree 1 or 2.
//!
//! At a query `q` the fit solves the weighted least-squares problem in the
//! scaled coordinate `u = (x - q) / h`; the intercept is the curve value and
//! the linear coefficient divided by `h` is the first derivative.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Compactly supported kernel on `|u| <= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    #[default]
    Triangular,
    Epanechnikov,
    Uniform,
}

impl Kernel {
    #[inline]
    pub fn weight(self, u: f64) -> f64 {
        let a = u.abs();
        match self {
            Kernel::Triangular if a < 1.0 => 1.0 - a,
            Kernel::Epanechnikov if a < 1.0 => 0.75 * (1.0 - a * a),
            Kernel::Uniform if a <= 1.0 => 0.5,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bandwidth {
    #[default]
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalPolyConfig {
    pub degree: usize,
    pub kernel: Kernel,
    pub bandwidth: Bandwidth,
}

impl LocalPolyConfig {
    pub fn linear() -> Self {
        Self {
            degree: 1,
            kernel: Kernel::Triangular,
            bandwidth: Bandwidth::Auto,
        }
    }

    pub fn quadratic() -> Self {
        Self {
            degree: 2,
            ..Self::linear()
        }
    }

    pub fn with_bandwidth(mut self, h: f64) -> Self {
        self.bandwidth = Bandwidth::Fixed(h);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.degree) {
            return Err(Error::InvalidConfig(format!(
                "local polynomial degree must be 1 or 2, got {}",
                self.degree
            )));
        }
        if let Bandwidth::Fixed(h) = self.bandwidth {
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::InvalidConfig(format!("bandwidth must be positive, got {h}")));
            }
        }
        Ok(())
    }

    fn min_points(&self) -> usize {
        self.degree + 2
    }
}

impl Default for LocalPolyConfig {
    fn default() -> Self {
        Self::linear()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalEstimate {
    pub value: f64,
    pub slope: f64,
}

const WIDEN_FACTOR: f64 = 1.5;
const WIDEN_STEPS: usize = 3;

/// A fitted local polynomial smoother; evaluation is lazy and thread-safe.
#[derive(Debug, Clone)]
pub struct CurveFit {
    xs: Vec<f64>,
    ys: Vec<f64>,
    config: LocalPolyConfig,
    bandwidth: f64,
}

impl CurveFit {
    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn config(&self) -> &LocalPolyConfig {
        &self.config
    }

    pub fn support(&self) -> (f64, f64) {
        (self.xs[0], *self.xs.last().expect("fit has points"))
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// Training points sorted by x.
    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.xs.iter().copied().zip(self.ys.iter().copied())
    }

    pub fn value(&self, q: f64) -> Result<f64> {
        self.eval(q).map(|e| e.value)
    }

    pub fn slope(&self, q: f64) -> Result<f64> {
        self.eval(q).map(|e| e.slope)
    }

    /// Local fit at `q`, widening the bandwidth geometrically when the
    /// window is too sparse or singular.
    pub fn eval(&self, q: f64) -> Result<LocalEstimate> {
        let mut h = self.bandwidth;
        for step in 0..=WIDEN_STEPS {
            if let Some(est) = self.solve_at(q, h) {
                return Ok(est);
            }
            if step < WIDEN_STEPS {
                h *= WIDEN_FACTOR;
            }
        }
        Err(Error::RankDeficient { query: q, bandwidth: h })
    }

    fn solve_at(&self, q: f64, h: f64) -> Option<LocalEstimate> {
        let p = self.config.degree;
        let lo = self.xs.partition_point(|&x| x < q - h);
        let mut moments = [0.0f64; 5];
        let mut rhs = [0.0f64; 3];
        let mut nonzero = 0usize;
        let mut distinct = 0usize;
        let mut last_x = f64::NAN;
        for i in lo..self.xs.len() {
            let x = self.xs[i];
            if x > q + h {
                break;
            }
            let u = (x - q) / h;
            let w = self.config.kernel.weight(u);
            if w <= 0.0 {
                continue;
            }
            nonzero += 1;
            if x != last_x {
                distinct += 1;
                last_x = x;
            }
            let y = self.ys[i];
            let mut uk = w;
            for (k, m) in moments.iter_mut().enumerate().take(2 * p + 1) {
                if k <= p {
                    rhs[k] += uk * y;
                }
                *m += uk;
                uk *= u;
            }
        }
        if nonzero < self.config.min_points() || distinct < p + 1 {
            return None;
        }
        let n = p + 1;
        let mut a = [[0.0f64; 4]; 3];
        for r in 0..n {
            for c in 0..n {
                a[r][c] = moments[r + c];
            }
            a[r][n] = rhs[r];
        }
        let coef = solve_small(&mut a, n, moments[0])?;
        let est = LocalEstimate {
            value: coef[0],
            slope: coef[1] / h,
        };
        (est.value.is_finite() && est.slope.is_finite()).then_some(est)
    }
}

/// Gaussian elimination with partial pivoting on an augmented `n x (n+1)`
/// system; `None` when a pivot is negligible relative to `scale`.
fn solve_small(a: &mut [[f64; 4]; 3], n: usize, scale: f64) -> Option<[f64; 3]> {
    let tol = 1e-12 * scale.abs().max(f64::MIN_POSITIVE);
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() <= tol {
            return None;
        }
        a.swap(col, pivot);
        for r in (col + 1)..n {
            let f = a[r][col] / a[col][col];
            for c in col..=n {
                a[r][c] -= f * a[col][c];
            }
        }
    }
    let mut out = [0.0f64; 3];
    for r in (0..n).rev() {
        let mut s = a[r][n];
        for c in (r + 1)..n {
            s -= a[r][c] * out[c];
        }
        out[r] = s / a[r][r];
    }
    Some(out)
}

/// Sorts the pairs and resolves the bandwidth; the smoother itself runs at
/// evaluation time.
pub fn fit_local_poly(points: &[(f64, f64)], config: LocalPolyConfig) -> Result<CurveFit> {
    config.validate()?;
    let mut sorted: Vec<(f64, f64)> = points.to_vec();
    if sorted.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::InsufficientData("non-finite point passed to local fit".into()));
    }
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let distinct = 1 + sorted.windows(2).filter(|w| w[0].0 != w[1].0).count();
    if sorted.is_empty() || distinct < config.min_points() {
        return Err(Error::InsufficientData(format!(
            "local polynomial of degree {} needs at least {} distinct x values, got {}",
            config.degree,
            config.min_points(),
            if sorted.is_empty() { 0 } else { distinct }
        )));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = sorted.into_iter().unzip();
    let bandwidth = match config.bandwidth {
        Bandwidth::Fixed(h) => h,
        Bandwidth::Auto => auto_bandwidth_sorted(&xs, config.degree)?,
    };
    Ok(CurveFit {
        xs,
        ys,
        config,
        bandwidth,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    FromAbove,
    FromBelow,
}

/// One-sided estimate of the curve value at `target`, using only points on
/// the declared side. A point exactly at `target` belongs to the upper side,
/// matching the `x >= c` treatment convention.
pub fn boundary_limit(points: &[(f64, f64)], target: f64, side: Side, config: LocalPolyConfig) -> Result<f64> {
    let same_side: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|&(x, _)| match side {
            Side::FromAbove => x >= target,
            Side::FromBelow => x < target,
        })
        .collect();
    if same_side.len() < config.degree + 2 {
        return Err(Error::InsufficientData(format!(
            "boundary limit at {target} needs {} points on the {:?} side, got {}",
            config.degree + 2,
            side,
            same_side.len()
        )));
    }
    fit_local_poly(&same_side, config)?.value(target)
}

/// Rule-of-thumb bandwidth `1.06 · min(sd, IQR/1.349) · n^(-1/5)`, floored so
/// that every query inside the data range sees at least `degree + 2` points
/// with nonzero kernel weight.
pub fn auto_bandwidth(xs: &[f64], degree: usize) -> Result<f64> {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    auto_bandwidth_sorted(&sorted, degree)
}

fn auto_bandwidth_sorted(xs: &[f64], degree: usize) -> Result<f64> {
    let n = xs.len();
    if n < 5 {
        return Err(Error::InsufficientData(format!(
            "bandwidth selection needs at least 5 points, got {n}"
        )));
    }
    if xs[0] == xs[n - 1] {
        return Err(Error::DegenerateSpread);
    }
    let rot = rule_of_thumb(sample_sd(xs), quantile_sorted(xs, 0.75) - quantile_sorted(xs, 0.25), n);
    let floor = coverage_radius(xs, (degree + 2).min(n));
    Ok(rot.max(floor * (1.0 + 1e-9)))
}

fn rule_of_thumb(sd: f64, iqr: f64, n: usize) -> f64 {
    let robust = iqr / 1.349;
    let spread = if robust > 0.0 { sd.min(robust) } else { sd };
    1.06 * spread * (n as f64).powf(-0.2)
}

fn sample_sd(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Linear-interpolation quantile of sorted data.
pub(crate) fn quantile_sorted(xs: &[f64], p: f64) -> f64 {
    let pos = p * (xs.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    xs[lo] + (pos - lo as f64) * (xs[hi] - xs[lo])
}

/// Largest distance from any query in `[x_min, x_max]` to its k-th nearest point.
fn coverage_radius(xs: &[f64], k: usize) -> f64 {
    let n = xs.len();
    let kth = |q: f64| -> f64 {
        // k nearest points always form a contiguous run in sorted order
        let mut best = f64::INFINITY;
        let at = xs.partition_point(|&x| x < q);
        let start = at.saturating_sub(k);
        let end = (at + k).min(n);
        for j in start..=end.saturating_sub(k) {
            let r = (q - xs[j]).abs().max((xs[j + k - 1] - q).abs());
            best = best.min(r);
        }
        best
    };
    let mut radius = kth(xs[0]).max(kth(xs[n - 1]));
    for j in 0..n.saturating_sub(k) {
        radius = radius.max(kth(0.5 * (xs[j] + xs[j + k])));
    }
    radius
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn grid(n: usize, lo: f64, hi: f64) -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn local_linear_exact_on_lines() {
        let pts: Vec<(f64, f64)> = grid(40, -3.0, 3.0).into_iter().map(|x| (x, 2.0 * x + 1.0)).collect();
        for h in [0.4, 1.0, 10.0] {
            for kernel in [Kernel::Triangular, Kernel::Epanechnikov, Kernel::Uniform] {
                let cfg = LocalPolyConfig {
                    degree: 1,
                    kernel,
                    bandwidth: Bandwidth::Fixed(h),
                };
                let fit = fit_local_poly(&pts, cfg).unwrap();
                for q in [-2.5, 0.0, 1.3, 3.0] {
                    let e = fit.eval(q).unwrap();
                    assert!((e.value - (2.0 * q + 1.0)).abs() < 1e-10);
                    assert!((e.slope - 2.0).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn local_quadratic_exact_on_parabola() {
        let pts: Vec<(f64, f64)> = grid(50, -2.0, 3.0).into_iter().map(|x| (x, x * x)).collect();
        let fit = fit_local_poly(&pts, LocalPolyConfig::quadratic().with_bandwidth(0.7)).unwrap();
        assert!((fit.slope(1.0).unwrap() - 2.0).abs() < 1e-8);
        assert!((fit.value(1.0).unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn noisy_sine_recovers_peak_on_average() {
        // Monte Carlo oracle: average the estimate at pi/2 over 100 seeds
        let normal = Normal::new(0.0, 0.1).unwrap();
        let mut total = 0.0;
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<(f64, f64)> = (0..200)
                .map(|_| {
                    let x = rng.random_range(0.0..std::f64::consts::PI);
                    (x, x.sin() + normal.sample(&mut rng))
                })
                .collect();
            let fit = fit_local_poly(&pts, LocalPolyConfig::linear()).unwrap();
            let v = fit.value(std::f64::consts::FRAC_PI_2).unwrap();
            assert!((v - 1.0).abs() < 0.1, "seed {seed}: {v}");
            total += v;
        }
        assert!((total / 100.0 - 1.0).abs() < 0.05);
    }

    #[test]
    fn boundary_limits_are_one_sided() {
        let pts: Vec<(f64, f64)> = grid(30, 1.0, 2.0).into_iter().map(|x| (x, 3.0 * x)).collect();
        let v = boundary_limit(&pts, 1.0, Side::FromAbove, LocalPolyConfig::linear()).unwrap();
        assert!((v - 3.0).abs() < 1e-10);

        let step: Vec<(f64, f64)> = grid(81, -1.0, 1.0)
            .into_iter()
            .map(|x| (x, if x < 0.0 { 0.0 } else { 1.0 }))
            .collect();
        let above = boundary_limit(&step, 0.0, Side::FromAbove, LocalPolyConfig::linear()).unwrap();
        let below = boundary_limit(&step, 0.0, Side::FromBelow, LocalPolyConfig::linear()).unwrap();
        assert!((above - 1.0).abs() < 1e-12);
        assert!(below.abs() < 1e-12);

        assert!(boundary_limit(&pts[..2], 1.0, Side::FromAbove, LocalPolyConfig::linear()).is_err());
    }

    #[test]
    fn auto_bandwidth_rule() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let xs: Vec<f64> = (0..100).map(|_| rng.random_range(0.0..1.0)).collect();
        let h = auto_bandwidth(&xs, 1).unwrap();
        let mut sorted = xs.clone();
        sorted.sort_by(f64::total_cmp);
        let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
        let expected = 1.06 * sample_sd(&sorted).min(iqr / 1.349) * 100f64.powf(-0.2);
        assert_eq!(h, expected);
        assert!((h - 0.122).abs() < 0.02, "{h}");

        assert!(matches!(auto_bandwidth(&[1.0; 10], 1), Err(Error::DegenerateSpread)));
        assert!(auto_bandwidth(&[1.0, 2.0], 1).is_err());
    }

    #[test]
    fn rule_scales_with_sample_size() {
        let a = rule_of_thumb(0.3, 0.5, 400);
        let b = rule_of_thumb(0.3, 0.5, 800);
        assert!((b / a - 2f64.powf(-0.2)).abs() < 1e-15);
    }

    #[test]
    fn bandwidth_floor_covers_sparse_tails() {
        // dense cluster plus a sparse tail: the rule of thumb alone is too small
        let mut xs: Vec<f64> = grid(200, 0.0, 1.0);
        xs.extend([5.0, 9.0, 14.0]);
        let h = auto_bandwidth(&xs, 1).unwrap();
        let pts: Vec<(f64, f64)> = xs.iter().map(|&x| (x, x)).collect();
        let cfg = LocalPolyConfig::linear().with_bandwidth(h);
        let fit = fit_local_poly(&pts, cfg).unwrap();
        for q in grid(300, 0.0, 14.0) {
            let lo = fit.xs.partition_point(|&x| x <= q - h);
            let hi = fit.xs.partition_point(|&x| x < q + h);
            assert!(hi - lo >= 3, "q={q}");
            fit.solve_at(q, h).expect("window solvable without widening");
        }
    }

    #[test]
    fn sparse_window_widens_or_fails() {
        let pts: Vec<(f64, f64)> = grid(10, 0.0, 1.0).into_iter().map(|x| (x, x)).collect();
        let fit = fit_local_poly(&pts, LocalPolyConfig::linear().with_bandwidth(0.02)).unwrap();
        assert!(matches!(fit.eval(0.5), Err(Error::RankDeficient { .. })));
        let fit = fit_local_poly(&pts, LocalPolyConfig::linear().with_bandwidth(0.12)).unwrap();
        // 0.12 * 1.5^3 = 0.405 covers enough points
        assert!((fit.value(0.5).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn config_and_input_validation() {
        let pts = [(0.0, 1.0), (1.0, 2.0), (2.0, 3.0)];
        assert!(fit_local_poly(&pts, LocalPolyConfig::linear()).is_err());
        let bad = LocalPolyConfig {
            degree: 3,
            ..LocalPolyConfig::linear()
        };
        assert!(bad.validate().is_err());
        assert!(LocalPolyConfig::linear().with_bandwidth(-1.0).validate().is_err());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn reproduces_low_degree_polynomials(
                coeffs in prop::array::uniform3(-5.0f64..5.0),
                degree in 1usize..=2,
                h in 0.3f64..5.0,
                kernel in prop::sample::select(vec![Kernel::Triangular, Kernel::Epanechnikov, Kernel::Uniform]),
                q in -1.0f64..1.0,
            ) {
                let c2 = if degree == 2 { coeffs[2] } else { 0.0 };
                let f = |x: f64| coeffs[0] + coeffs[1] * x + c2 * x * x;
                let pts: Vec<(f64, f64)> = grid(60, -2.0, 2.0).into_iter().map(|x| (x, f(x))).collect();
                let cfg = LocalPolyConfig { degree, kernel, bandwidth: Bandwidth::Fixed(h) };
                let e = fit_local_poly(&pts, cfg).unwrap().eval(q).unwrap();
                prop_assert!((e.value - f(q)).abs() < 1e-8);
                prop_assert!((e.slope - (coeffs[1] + 2.0 * c2 * q)).abs() < 1e-8);
            }

            #[test]
            fn wrong_side_data_is_ignored(noise in prop::collection::vec(-100.0f64..100.0, 40)) {
                let xs = grid(80, -1.0, 1.0);
                let base: Vec<(f64, f64)> = xs.iter().map(|&x| (x, x.sin())).collect();
                let mut perturbed = base.clone();
                for (p, e) in perturbed.iter_mut().filter(|p| p.0 < 0.0).zip(&noise) {
                    p.1 += e;
                }
                let a = boundary_limit(&base, 0.0, Side::FromAbove, LocalPolyConfig::linear()).unwrap();
                let b = boundary_limit(&perturbed, 0.0, Side::FromAbove, LocalPolyConfig::linear()).unwrap();
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }

            #[test]
            fn evaluation_is_order_independent(qs in prop::collection::vec(0.0f64..1.0, 2..10)) {
                let pts: Vec<(f64, f64)> = grid(50, 0.0, 1.0).into_iter().map(|x| (x, (3.0 * x).cos())).collect();
                let fit = fit_local_poly(&pts, LocalPolyConfig::quadratic()).unwrap();
                let forward: Vec<u64> = qs.iter().map(|&q| fit.value(q).unwrap().to_bits()).collect();
                let backward: Vec<u64> = qs.iter().rev().map(|&q| fit.value(q).unwrap().to_bits()).collect();
                prop_assert_eq!(forward, backward.into_iter().rev().collect::<Vec<_>>());
            }
        }
    }
}
