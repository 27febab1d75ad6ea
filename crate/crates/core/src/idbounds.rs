//! Partial identification of the cross-group difference function.
//!
//! For a pair of groups sharing treatment status `w`, the observed gap
//! `d̃(x, g, g') = m̃(x, g) - m̃(x, g')` is identified on the region where both
//! groups have status `w`. It is estimated with a two-stage doubly-robust
//! learner (pseudo-outcomes, then a local quadratic regression), and the
//! unidentified extrapolation is bounded by a Lipschitz envelope anchored at
//! the boundary `c̃_{g*}`:
//!
//! ```text
//! B_l(w, x, g, g') = d̃(c̃_{g*}) - λ |x - c̃_{g*}|
//! B_u(w, x, g, g') = d̃(c̃_{g*}) + λ |x - c̃_{g*}|
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, GroupId, StudyDesign, ThresholdPolicy};
use crate::error::{Error, Result, ResultExt};
use crate::estimator::Nuisances;
use crate::smooth::{boundary_limit, fit_local_poly, CurveFit, LocalPolyConfig, Side};

pub const DEFAULT_GRID_SIZE: usize = 50;
pub const DEFAULT_GRID_BUFFER: f64 = 0.05;
const MIN_PSEUDO_PAIRS: usize = 5;

/// Identifies one difference function `d(w, ·, g, g')`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PairKey {
    pub w: u8,
    pub g: GroupId,
    pub g_ref: GroupId,
}

impl PairKey {
    pub fn new(w: u8, g: GroupId, g_ref: GroupId) -> Self {
        Self { w, g, g_ref }
    }

    /// The group whose cutoff anchors the bound: `g ∨ g'` for `w = 1`,
    /// `g ∧ g'` for `w = 0`.
    pub fn anchor(&self) -> GroupId {
        if self.w == 1 {
            self.g.max(self.g_ref)
        } else {
            self.g.min(self.g_ref)
        }
    }

    /// Where both groups share treatment status `w` under the baseline.
    pub fn region(&self, design: &StudyDesign) -> Region {
        let (a, b) = (design.cutoff(self.g), design.cutoff(self.g_ref));
        if self.w == 1 {
            Region {
                lo: a.max(b),
                hi: f64::INFINITY,
            }
        } else {
            Region {
                lo: f64::NEG_INFINITY,
                hi: a.min(b),
            }
        }
    }
}

impl fmt::Display for PairKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(w={}, g={}, g'={})", self.w, self.g, self.g_ref)
    }
}

/// Closed interval; either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Region {
    pub lo: f64,
    pub hi: f64,
}

impl Region {
    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }
}

/// The difference pairs entering the worst-case objective: `(1, g, g')` for
/// every `g' < g` and `(0, g, g')` for every `g' > g`.
pub fn required_pairs(design: &StudyDesign) -> Vec<PairKey> {
    let mut out = Vec::new();
    for g in design.groups() {
        for h in design.groups() {
            if h < g {
                out.push(PairKey::new(1, g, h));
            } else if h > g {
                out.push(PairKey::new(0, g, h));
            }
        }
    }
    out.sort();
    out
}

/// Doubly-robust pseudo-outcomes for `d̃(·, g, g')` on records with `W = w`,
/// `G ∈ {g, g'}` and `x` in the identified region.
pub fn difference_pseudo_outcomes<N: Nuisances + ?Sized>(
    dataset: &Dataset,
    nuisances: &N,
    key: PairKey,
) -> Result<Vec<(f64, f64)>> {
    let region = key.region(dataset.design());
    let mut out = Vec::new();
    for (i, r) in dataset.records().iter().enumerate() {
        if r.w() != key.w || (r.group != key.g && r.group != key.g_ref) || !region.contains(r.x) {
            continue;
        }
        let mg = nuisances.conditional_mean(i, r.x, key.g)?;
        let mh = nuisances.conditional_mean(i, r.x, key.g_ref)?;
        let e = nuisances.propensities(i, r.x);
        let mut phi = mg - mh;
        if r.group == key.g {
            phi += (r.y - mg) / e[key.g.0];
        } else {
            phi -= (r.y - mh) / e[key.g_ref.0];
        }
        out.push((r.x, phi));
    }
    if out.is_empty() {
        return Err(Error::MissingPair {
            w: key.w,
            g: key.g,
            g_ref: key.g_ref,
            reason: "no records in the identified region".into(),
        });
    }
    Ok(out)
}

/// Settings for the second-stage regression and the smoothness grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DifferenceConfig {
    pub curve: LocalPolyConfig,
    pub boundary: LocalPolyConfig,
    pub grid_size: usize,
    pub grid_buffer: f64,
}

impl Default for DifferenceConfig {
    fn default() -> Self {
        Self {
            curve: LocalPolyConfig::quadratic(),
            boundary: LocalPolyConfig::linear(),
            grid_size: DEFAULT_GRID_SIZE,
            grid_buffer: DEFAULT_GRID_BUFFER,
        }
    }
}

impl DifferenceConfig {
    pub fn validate(&self) -> Result<()> {
        self.curve.validate()?;
        self.boundary.validate()?;
        if self.grid_size < 2 {
            return Err(Error::InvalidConfig(format!(
                "smoothness grid needs at least 2 points, got {}",
                self.grid_size
            )));
        }
        if !(0.0..0.5).contains(&self.grid_buffer) {
            return Err(Error::InvalidConfig(format!(
                "grid buffer must be in [0, 0.5), got {}",
                self.grid_buffer
            )));
        }
        Ok(())
    }
}

/// Second-stage fit of `d̃(·, g, g')` over its identified region.
#[derive(Debug, Clone)]
pub struct DifferenceCurve {
    pub key: PairKey,
    pub region: Region,
    /// `c̃_{g*}`.
    pub anchor: f64,
    pub curve: CurveFit,
    boundary: LocalPolyConfig,
}

pub fn fit_difference_curve(
    key: PairKey,
    pairs: &[(f64, f64)],
    design: &StudyDesign,
    config: &DifferenceConfig,
) -> Result<DifferenceCurve> {
    let region = key.region(design);
    let inside: Vec<(f64, f64)> = pairs.iter().copied().filter(|&(x, _)| region.contains(x)).collect();
    if inside.len() < MIN_PSEUDO_PAIRS {
        return Err(Error::MissingPair {
            w: key.w,
            g: key.g,
            g_ref: key.g_ref,
            reason: format!("{} pseudo-outcomes in region, need {MIN_PSEUDO_PAIRS}", inside.len()),
        });
    }
    let curve = fit_local_poly(&inside, config.curve)?;
    Ok(DifferenceCurve {
        key,
        region,
        anchor: design.cutoff(key.anchor()),
        curve,
        boundary: config.boundary,
    })
}

/// One-sided limit of the fitted difference at `c̃_{g*}`, approached from
/// inside the identified region.
pub fn boundary_difference(curve: &DifferenceCurve) -> Result<f64> {
    let side = if curve.key.w == 1 { Side::FromAbove } else { Side::FromBelow };
    let points: Vec<(f64, f64)> = curve.curve.points().collect();
    boundary_limit(&points, curve.anchor, side, curve.boundary)
}

/// `M · max |d̂'(x)|` over equally spaced points spanning the identified
/// region's data, less a buffer at each end.
pub fn select_smoothness(curve: &DifferenceCurve, grid_size: usize, buffer: f64, multiplier: f64) -> Result<f64> {
    if multiplier == 0.0 {
        return Ok(0.0);
    }
    let (lo, hi) = curve.curve.support();
    let (lo, hi) = (lo.max(curve.region.lo), hi.min(curve.region.hi));
    let pad = buffer * (hi - lo);
    let (a, b) = (lo + pad, hi - pad);
    let mut best = 0.0f64;
    for k in 0..grid_size {
        let x = a + (b - a) * k as f64 / (grid_size - 1) as f64;
        best = best.max(curve.curve.slope(x)?.abs());
    }
    Ok(multiplier * best)
}

/// Base smoothness estimates and the multiplier applied to them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmoothnessParams {
    pub lambda: BTreeMap<PairKey, f64>,
    pub multiplier: f64,
}

impl SmoothnessParams {
    pub fn effective(&self, key: &PairKey) -> Option<f64> {
        self.lambda.get(key).map(|l| l * self.multiplier)
    }
}

/// Fitted difference curves for every required pair, with their boundary
/// values and base smoothness estimates. Independent of treatment cost.
#[derive(Debug, Clone)]
pub struct BoundCurves {
    pub curves: BTreeMap<PairKey, DifferenceCurve>,
    pub boundary: BTreeMap<PairKey, f64>,
    pub lambda: BTreeMap<PairKey, f64>,
}

impl BoundCurves {
    pub fn smoothness(&self, multiplier: f64) -> SmoothnessParams {
        SmoothnessParams {
            lambda: self.lambda.clone(),
            multiplier,
        }
    }
}

pub fn fit_bound_curves<N: Nuisances + ?Sized>(
    dataset: &Dataset,
    nuisances: &N,
    config: &DifferenceConfig,
) -> Result<BoundCurves> {
    config.validate()?;
    let design = dataset.design();
    let fitted = required_pairs(design)
        .into_par_iter()
        .map(|key| -> Result<(PairKey, DifferenceCurve, f64, f64)> {
            let ctx = || format!("difference curve {key}");
            let missing = |e: Error| match e {
                e @ Error::MissingPair { .. } => e,
                e => Error::MissingPair {
                    w: key.w,
                    g: key.g,
                    g_ref: key.g_ref,
                    reason: e.to_string(),
                },
            };
            let pairs = difference_pseudo_outcomes(dataset, nuisances, key).stage(ctx)?;
            let curve = fit_difference_curve(key, &pairs, design, config).map_err(missing)?;
            let d0 = boundary_difference(&curve).map_err(missing)?;
            let lambda = select_smoothness(&curve, config.grid_size, config.grid_buffer, 1.0).map_err(missing)?;
            Ok((key, curve, d0, lambda))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = BoundCurves {
        curves: BTreeMap::new(),
        boundary: BTreeMap::new(),
        lambda: BTreeMap::new(),
    };
    for (key, curve, d0, lambda) in fitted {
        out.curves.insert(key, curve);
        out.boundary.insert(key, d0);
        out.lambda.insert(key, lambda);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairBound {
    pub anchor: f64,
    pub boundary: f64,
    pub lambda: f64,
}

/// The empirical ambiguity set: pointwise envelopes for every required pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundModel {
    pairs: BTreeMap<PairKey, PairBound>,
    multiplier: f64,
}

impl BoundModel {
    /// Builds from boundary values and base λ; `lambda` is scaled by
    /// `multiplier`. Every required pair of `design` must be present.
    pub fn from_parts(
        design: &StudyDesign,
        boundary: &BTreeMap<PairKey, f64>,
        params: &SmoothnessParams,
    ) -> Result<Self> {
        if !(params.multiplier >= 0.0 && params.multiplier.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "smoothness multiplier must be finite and nonnegative, got {}",
                params.multiplier
            )));
        }
        let mut pairs = BTreeMap::new();
        for key in required_pairs(design) {
            let missing = |reason: &str| Error::MissingPair {
                w: key.w,
                g: key.g,
                g_ref: key.g_ref,
                reason: reason.into(),
            };
            let d0 = *boundary.get(&key).ok_or_else(|| missing("no boundary estimate"))?;
            let lambda = *params.lambda.get(&key).ok_or_else(|| missing("no smoothness estimate"))?;
            if !(lambda >= 0.0 && lambda.is_finite()) {
                return Err(Error::InvalidConfig(format!("λ for {key} must be finite and nonnegative, got {lambda}")));
            }
            pairs.insert(
                key,
                PairBound {
                    anchor: design.cutoff(key.anchor()),
                    boundary: d0,
                    lambda,
                },
            );
        }
        Ok(Self {
            pairs,
            multiplier: params.multiplier,
        })
    }

    pub fn from_curves(design: &StudyDesign, curves: &BoundCurves, multiplier: f64) -> Result<Self> {
        Self::from_parts(design, &curves.boundary, &curves.smoothness(multiplier))
    }

    pub fn with_multiplier(&self, multiplier: f64) -> Self {
        Self {
            pairs: self.pairs.clone(),
            multiplier,
        }
    }

    pub fn multiplier(&self) -> f64 {
        self.multiplier
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&PairKey, &PairBound)> {
        self.pairs.iter()
    }

    fn pair(&self, key: &PairKey) -> &PairBound {
        self.pairs
            .get(key)
            .unwrap_or_else(|| panic!("bound model has no entry for {key}"))
    }

    pub fn effective_lambda(&self, key: &PairKey) -> f64 {
        self.pair(key).lambda * self.multiplier
    }

    /// Distance from `x` to the anchor cutoff, times the effective λ.
    fn slack(&self, key: &PairKey, x: f64) -> (f64, f64) {
        let p = self.pair(key);
        let lambda = p.lambda * self.multiplier;
        // avoid 0 * inf when λ vanishes
        let slack = if lambda == 0.0 { 0.0 } else { lambda * (x - p.anchor).abs() };
        (p.boundary, slack)
    }

    pub fn lower(&self, key: &PairKey, x: f64) -> f64 {
        let (d0, s) = self.slack(key, x);
        d0 - s
    }

    pub fn upper(&self, key: &PairKey, x: f64) -> f64 {
        let (d0, s) = self.slack(key, x);
        d0 + s
    }

    pub fn width(&self, key: &PairKey, x: f64) -> f64 {
        2.0 * self.slack(key, x).1
    }
}

/// Fits the difference curves and assembles the bound model at `multiplier`.
pub fn build_bound_model<N: Nuisances + ?Sized>(
    dataset: &Dataset,
    nuisances: &N,
    config: &DifferenceConfig,
    multiplier: f64,
) -> Result<BoundModel> {
    let curves = fit_bound_curves(dataset, nuisances, config)?;
    BoundModel::from_curves(dataset.design(), &curves, multiplier)
}

/// The difference pair a record of group `g` at `x` draws on when `policy`
/// and the baseline disagree there, or `None` when they agree.
pub fn reference_pair(design: &StudyDesign, x: f64, g: GroupId, policy_treats: bool) -> Option<PairKey> {
    let baseline = design.baseline_treats(x, g);
    if policy_treats == baseline {
        return None;
    }
    let j = design.interval_index(x)?;
    if policy_treats {
        Some(PairKey::new(1, g, GroupId(j)))
    } else {
        Some(PairKey::new(0, g, GroupId(j + 1)))
    }
}

/// `min Ξ̂₂`: each disagreeing record contributes `B_l` of its reference pair.
pub fn worst_case_xi2(dataset: &Dataset, policy: &ThresholdPolicy, bounds: &BoundModel) -> f64 {
    let design = dataset.design();
    let mut total = 0.0;
    for r in dataset.records() {
        if let Some(key) = reference_pair(design, r.x, r.group, policy.treats(r.x, r.group)) {
            total += bounds.lower(&key, r.x);
        }
    }
    total / dataset.len() as f64
}

/// Writes `w,g,g_ref,x,b_lower,b_upper` rows for every pair at every `x`.
pub fn write_bounds_csv<W: Write>(writer: W, design: &StudyDesign, bounds: &BoundModel, xs: &[f64]) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["w", "g", "g_ref", "x", "b_lower", "b_upper"])?;
    for (key, _) in bounds.pairs() {
        for &x in xs {
            out.write_record(&[
                key.w.to_string(),
                design.label(key.g).to_string(),
                design.label(key.g_ref).to_string(),
                x.to_string(),
                bounds.lower(key, x).to_string(),
                bounds.upper(key, x).to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Record;
    use crate::estimator::OracleNuisances;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn design3() -> StudyDesign {
        StudyDesign::new([("1", 0.0), ("2", 1.0), ("3", 2.0)]).unwrap()
    }

    fn toy(design: &StudyDesign, rows: &[(f64, usize, f64)]) -> Dataset {
        let records = rows
            .iter()
            .map(|&(x, g, y)| Record {
                x,
                group: GroupId(g),
                treated: design.baseline_treats(x, GroupId(g)),
                y,
            })
            .collect();
        Dataset::new(records, design.clone(), 0).unwrap()
    }

    fn flat_model(design: &StudyDesign, d0: f64, lambda: f64, m: f64) -> BoundModel {
        let keys = required_pairs(design);
        let boundary = keys.iter().map(|&k| (k, d0)).collect();
        let lambda = keys.iter().map(|&k| (k, lambda)).collect();
        BoundModel::from_parts(design, &boundary, &SmoothnessParams { lambda, multiplier: m }).unwrap()
    }

    #[test]
    fn required_pairs_and_anchors() {
        let d = design3();
        let keys = required_pairs(&d);
        assert_eq!(keys.len(), 6);
        for k in &keys {
            if k.w == 1 {
                assert!(k.g_ref < k.g);
            } else {
                assert!(k.g_ref > k.g);
            }
            assert_eq!(k.anchor(), k.g);
        }
        let k = PairKey::new(1, GroupId(2), GroupId(1));
        assert_eq!(k.anchor(), GroupId(2));
        assert_eq!(PairKey::new(0, GroupId(2), GroupId(1)).anchor(), GroupId(1));
        assert_eq!(k.region(&d).lo, 2.0);
        assert_eq!(PairKey::new(0, GroupId(0), GroupId(2)).region(&d).hi, 0.0);
    }

    #[test]
    fn pseudo_outcome_hand_values() {
        let d = StudyDesign::new([("1", 0.0), ("2", 1.0)]).unwrap();
        let key = PairKey::new(1, GroupId(1), GroupId(0));
        let ds = toy(&d, &[(1.5, 1, 5.0), (1.2, 0, 2.0), (0.5, 0, 9.0)]);
        let oracle = OracleNuisances::new(|_x, g: GroupId| if g.0 == 1 { 4.0 } else { 1.0 }, |_x| vec![0.5, 0.5]);
        let pairs = difference_pseudo_outcomes(&ds, &oracle, key).unwrap();
        // the record at 0.5 lies outside the region x >= 1
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0], (1.5, 3.0 + 2.0 * 1.0));
        assert_eq!(pairs[1], (1.2, 3.0 - 2.0 * 1.0));

        let exact = toy(&d, &[(1.5, 1, 4.0)]);
        assert_eq!(difference_pseudo_outcomes(&exact, &oracle, key).unwrap()[0].1, 3.0);

        let empty = toy(&d, &[(0.5, 0, 1.0)]);
        let err = difference_pseudo_outcomes(&empty, &oracle, key).unwrap_err();
        assert!(matches!(err, Error::MissingPair { w: 1, .. }));
    }

    #[test]
    fn identical_groups_have_zero_mean_difference() {
        let d = StudyDesign::new([("1", 0.0), ("2", 0.5)]).unwrap();
        let key = PairKey::new(1, GroupId(1), GroupId(0));
        let truth = |x: f64| (3.0 * x).sin() + 1.0;
        let mut means = Vec::new();
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rows: Vec<_> = (0..400)
                .map(|i| {
                    let x = rng.random_range(-0.5..1.5);
                    let noise: f64 = rng.random_range(-0.5..0.5);
                    (x, i % 2, truth(x) + noise)
                })
                .collect();
            let ds = toy(&d, &rows);
            let oracle = OracleNuisances::new(move |x, _g| truth(x), |_x| vec![0.5, 0.5]);
            let pairs = difference_pseudo_outcomes(&ds, &oracle, key).unwrap();
            means.push(pairs.iter().map(|p| p.1).sum::<f64>() / pairs.len() as f64);
        }
        let avg = means.iter().sum::<f64>() / means.len() as f64;
        let sd = (means.iter().map(|m| (m - avg).powi(2)).sum::<f64>() / 49.0).sqrt();
        assert!(avg.abs() < 3.0 * sd / 50f64.sqrt() + 1e-12, "{avg} {sd}");
    }

    #[test]
    fn difference_curve_reproduces_polynomials() {
        let d = StudyDesign::new([("1", 0.0), ("2", 1.0)]).unwrap();
        let key = PairKey::new(1, GroupId(1), GroupId(0));
        let xs: Vec<f64> = (0..200).map(|i| 1.0 + i as f64 * 0.01).collect();
        let cfg = DifferenceConfig::default();

        let constant: Vec<_> = xs.iter().map(|&x| (x, 0.7)).collect();
        let c = fit_difference_curve(key, &constant, &d, &cfg).unwrap();
        for &x in xs.iter().step_by(17) {
            assert!((c.curve.value(x).unwrap() - 0.7).abs() < 1e-8);
            assert!(c.curve.slope(x).unwrap().abs() < 1e-8);
        }
        assert!(select_smoothness(&c, 50, 0.05, 3.0).unwrap() < 1e-8);
        assert!((boundary_difference(&c).unwrap() - 0.7).abs() < 1e-10);

        let affine: Vec<_> = xs.iter().map(|&x| (x, 0.3 - 1.5 * x)).collect();
        let a = fit_difference_curve(key, &affine, &d, &cfg).unwrap();
        for &x in xs.iter().step_by(13) {
            assert!((a.curve.slope(x).unwrap() + 1.5).abs() < 1e-8);
        }
        assert!((select_smoothness(&a, 50, 0.05, 1.0).unwrap() - 1.5).abs() < 1e-8);
        assert!((select_smoothness(&a, 50, 0.05, 4.0).unwrap() - 6.0).abs() < 1e-7);
        assert_eq!(select_smoothness(&a, 50, 0.05, 0.0).unwrap(), 0.0);
        assert!((boundary_difference(&a).unwrap() - (0.3 - 1.5)).abs() < 1e-10);

        let few: Vec<_> = xs.iter().take(4).map(|&x| (x, 1.0)).collect();
        assert!(matches!(fit_difference_curve(key, &few, &d, &cfg), Err(Error::MissingPair { .. })));
    }

    #[test]
    fn boundary_approaches_from_inside_region() {
        let d = StudyDesign::new([("1", 0.0), ("2", 1.0)]).unwrap();
        // w=0 pair anchored at c̃_1 = 0, region x <= 0
        let key = PairKey::new(0, GroupId(0), GroupId(1));
        let pts: Vec<_> = (0..100).map(|i| (-1.0 + i as f64 * 0.01, 2.0)).collect();
        let c = fit_difference_curve(key, &pts, &d, &DifferenceConfig::default()).unwrap();
        assert_eq!(c.anchor, 0.0);
        assert!((boundary_difference(&c).unwrap() - 2.0).abs() < 1e-10);
        let mut with_outside = pts.clone();
        with_outside.extend((1..50).map(|i| (i as f64 * 0.01, 100.0)));
        let c2 = fit_difference_curve(key, &with_outside, &d, &DifferenceConfig::default()).unwrap();
        assert_eq!(
            boundary_difference(&c2).unwrap().to_bits(),
            boundary_difference(&c).unwrap().to_bits()
        );
    }

    #[test]
    fn bound_hand_values() {
        let d = StudyDesign::new([("1", 0.0), ("2", 1.0)]).unwrap();
        let key = PairKey::new(1, GroupId(1), GroupId(0));
        let collapsed = flat_model(&d, 0.5, 0.0, 1.0);
        for x in [-3.0, 0.0, 0.4, 1.0, 7.0] {
            assert_eq!(collapsed.lower(&key, x), 0.5);
            assert_eq!(collapsed.upper(&key, x), 0.5);
        }
        let m = flat_model(&d, 0.5, 0.1, 1.0);
        assert!((m.lower(&key, 0.4) - 0.44).abs() < 1e-15);
        assert!((m.upper(&key, 0.4) - 0.56).abs() < 1e-15);
        assert_eq!(m.lower(&key, 1.0), 0.5);
        assert_eq!(m.with_multiplier(0.0).width(&key, 0.4), 0.0);
        assert!((m.with_multiplier(2.0).lower(&key, 0.4) - 0.38).abs() < 1e-15);
    }

    #[test]
    fn missing_pair_is_named() {
        let d = design3();
        let mut boundary: BTreeMap<_, _> = required_pairs(&d).into_iter().map(|k| (k, 0.0)).collect();
        let lambda = boundary.clone();
        boundary.remove(&PairKey::new(0, GroupId(0), GroupId(2)));
        let err = BoundModel::from_parts(&d, &boundary, &SmoothnessParams { lambda, multiplier: 1.0 }).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::MissingPair { w: 0, .. }), "{msg}");
        assert!(msg.contains("w=0"), "{msg}");
    }

    /// Reference groups picked by scanning for the nearest cutoff on the far
    /// side of `x`, independent of interval bookkeeping.
    fn brute_reference(cutoffs: &[f64], x: f64, g: usize, newly_treated: bool) -> usize {
        if newly_treated {
            (0..g).rev().find(|&h| cutoffs[h] <= x).unwrap()
        } else {
            (g + 1..cutoffs.len()).find(|&h| cutoffs[h] >= x).unwrap()
        }
    }

    #[test]
    fn worst_case_xi2_five_record_toy() {
        let d = design3();
        let cut = d.cutoffs().to_vec();
        let rows = [(1.5, 2, 0.0), (0.5, 2, 0.0), (0.7, 1, 0.0), (1.2, 0, 0.0), (0.2, 0, 0.0)];
        let ds = toy(&d, &rows);
        // group 3 moves down to 0.4, group 2 down to 0.6, group 1 up to 1.5
        let pol = ThresholdPolicy::new(&d, vec![1.5, 0.6, 0.4]).unwrap();
        let mut boundary = BTreeMap::new();
        let mut lambda = BTreeMap::new();
        for (n, k) in required_pairs(&d).into_iter().enumerate() {
            boundary.insert(k, 0.1 * (n as f64 + 1.0));
            lambda.insert(k, 0.05 * (n as f64 + 2.0));
        }
        let params = SmoothnessParams { lambda, multiplier: 1.5 };
        let b = BoundModel::from_parts(&d, &boundary, &params).unwrap();

        let mut expected = 0.0;
        let mut used = Vec::new();
        for &(x, g, _) in &rows {
            let base = x >= cut[g];
            let new = x >= pol.cutoffs()[g];
            if base == new {
                continue;
            }
            let h = brute_reference(&cut, x, g, new);
            let key = PairKey::new(new as u8, GroupId(g), GroupId(h));
            let star = if new { g.max(h) } else { g.min(h) };
            expected += boundary[&key] - params.lambda[&key] * 1.5 * (x - cut[star]).abs();
            used.push((g, h));
        }
        expected /= rows.len() as f64;
        // group 3 at 1.5 borrows from group 2, at 0.5 from group 1; group 1
        // raised past 1.2 borrows from group 3, past 0.2 from group 2
        assert_eq!(used, vec![(2, 1), (2, 0), (1, 0), (0, 2), (0, 1)]);
        assert!((worst_case_xi2(&ds, &pol, &b) - expected).abs() < 1e-12);
        assert_eq!(worst_case_xi2(&ds, &ThresholdPolicy::baseline(&d), &b), 0.0);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        proptest! {
            #[test]
            fn envelope_width_is_exact(lambda in 0.0f64..10.0, x in -100.0f64..100.0, d0 in -5.0f64..5.0, c in -50.0f64..50.0) {
                let d = StudyDesign::new([("1", c - 1.0), ("2", c)]).unwrap();
                let key = PairKey::new(1, GroupId(1), GroupId(0));
                let b = flat_model(&d, d0, lambda, 1.0);
                prop_assert!(b.lower(&key, x) <= b.upper(&key, x));
                prop_assert!((b.width(&key, x) - 2.0 * lambda * (x - c).abs()).abs() <= 1e-14 * (1.0 + lambda * (x - c).abs()));
            }

            #[test]
            fn reference_pair_matches_scan(x in 0.0f64..2.0, g in 0usize..3, c in 0.0f64..2.0) {
                let d = design3();
                let pol = ThresholdPolicy::new(&d, { let mut v = d.cutoffs().to_vec(); v[g] = c; v }).unwrap();
                let treats = pol.treats(x, GroupId(g));
                match reference_pair(&d, x, GroupId(g), treats) {
                    None => prop_assert_eq!(treats, d.baseline_treats(x, GroupId(g))),
                    Some(k) => {
                        let h = brute_reference(d.cutoffs(), x, g, treats);
                        // ties at an interior cutoff resolve toward the half-open interval
                        let ok = k.g_ref.0 == h || d.cutoffs().contains(&x);
                        prop_assert!(ok, "{:?} vs {}", k, h);
                        if treats { prop_assert!(k.g_ref < k.g) } else { prop_assert!(k.g_ref > k.g) }
                    }
                }
            }

            #[test]
            fn xi2_nonincreasing_in_multiplier(seed in 0u64..500, m1 in 0.0f64..5.0, dm in 0.0f64..5.0) {
                let d = design3();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let rows: Vec<_> = (0..30).map(|i| (rng.random_range(-0.5..2.5), i % 3, 0.0)).collect();
                let ds = toy(&d, &rows);
                let pol = ThresholdPolicy::new(&d, vec![rng.random_range(0.0..2.0), rng.random_range(0.0..2.0), rng.random_range(0.0..2.0)]).unwrap();
                let b = flat_model(&d, 0.3, 0.2, m1);
                let lo = worst_case_xi2(&ds, &pol, &b);
                let hi = worst_case_xi2(&ds, &pol, &b.with_multiplier(m1 + dm));
                prop_assert!(hi <= lo + 1e-15);
            }
        }
    }
}
