//! Cross-fitting and the point-identified parts of the worst-case objective.
//!
//! For a candidate policy `π` and the baseline `π̃`, the objective is
//! `Î_iden + Ξ̂_DR + min Ξ̂₂`. This module estimates the first two terms:
//! the agreement term (a plain sample average) and the doubly-robust term
//! built from per-record extrapolation scores `Γ̂⁽¹⁾`, `Γ̂⁽⁰⁾`.
//!
//! Reference groups follow the nearest-cutoff rule: a record with
//! `x ∈ [c̃_j, c̃_{j+1})` borrows from group `j` when extrapolating a
//! higher group's untreated region into treatment, and from group `j + 1`
//! when extrapolating a lower group's treated region into control.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, GroupId, StudyDesign, ThresholdPolicy};
use crate::error::{Error, Result, ResultExt};
use crate::smooth::propensity::DEFAULT_BASIS_DEGREE;
use crate::smooth::{fit_local_poly, CurveFit, LocalPolyConfig, PropensityModel, DEFAULT_CLAMP};

pub const DEFAULT_FOLDS: usize = 5;

/// Stratified partition of records into `K` folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    k: usize,
    fold_of: Vec<usize>,
}

impl FoldAssignment {
    pub fn num_folds(&self) -> usize {
        self.k
    }

    pub fn fold_of(&self, record: usize) -> usize {
        self.fold_of[record]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.fold_of
    }
}

/// Shuffles each group with a seeded generator and deals records round-robin,
/// continuing the deal across groups so fold totals also stay balanced.
pub fn make_folds(dataset: &Dataset, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 folds, got {k}")));
    }
    let design = dataset.design();
    let mut by_group: Vec<Vec<usize>> = vec![Vec::new(); design.num_groups()];
    for (i, r) in dataset.records().iter().enumerate() {
        by_group[r.group.0].push(i);
    }
    for (g, members) in by_group.iter().enumerate() {
        if members.len() < k {
            return Err(Error::TooFewRecords {
                group: design.label(GroupId(g)).to_string(),
                count: members.len(),
                needed: k,
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = vec![0usize; dataset.len()];
    let mut dealt = 0usize;
    for members in &mut by_group {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            fold_of[i] = dealt % k;
            dealt += 1;
        }
    }
    Ok(FoldAssignment { k, fold_of })
}

/// Source of the nuisance functions evaluated for record `record`.
///
/// Cross-fitted implementations answer with models trained without the
/// record's fold; oracle implementations may ignore `record`.
pub trait Nuisances: Sync {
    /// `m̃(x, g) = E[Y | X = x, G = g]`, on the side of `c̃_g` holding `x`.
    fn conditional_mean(&self, record: usize, x: f64, group: GroupId) -> Result<f64>;

    /// Clamped group-membership probabilities `(e_1(x), …, e_Q(x))`.
    fn propensities(&self, record: usize, x: f64) -> Vec<f64>;
}

impl<N: Nuisances + ?Sized> Nuisances for &N {
    fn conditional_mean(&self, record: usize, x: f64, group: GroupId) -> Result<f64> {
        (**self).conditional_mean(record, x, group)
    }

    fn propensities(&self, record: usize, x: f64) -> Vec<f64> {
        (**self).propensities(record, x)
    }
}

/// User-supplied nuisance functions, shared by every record.
pub struct OracleNuisances<M, E> {
    mean: M,
    propensity: E,
}

impl<M, E> OracleNuisances<M, E>
where
    M: Fn(f64, GroupId) -> f64 + Sync,
    E: Fn(f64) -> Vec<f64> + Sync,
{
    pub fn new(mean: M, propensity: E) -> Self {
        Self { mean, propensity }
    }
}

impl<M, E> Nuisances for OracleNuisances<M, E>
where
    M: Fn(f64, GroupId) -> f64 + Sync,
    E: Fn(f64) -> Vec<f64> + Sync,
{
    fn conditional_mean(&self, _record: usize, x: f64, group: GroupId) -> Result<f64> {
        Ok((self.mean)(x, group))
    }

    fn propensities(&self, _record: usize, x: f64) -> Vec<f64> {
        (self.propensity)(x)
    }
}

/// Shifts the treated side of every conditional mean by `-cost`, which is
/// what refitting on `u(y, w) = y - C·w` yields for smoothers that are linear
/// in the outcome and reproduce constants.
pub struct CostAdjusted<'a, N: ?Sized> {
    inner: &'a N,
    design: &'a StudyDesign,
    cost: f64,
}

impl<'a, N: Nuisances + ?Sized> CostAdjusted<'a, N> {
    pub fn new(inner: &'a N, design: &'a StudyDesign, cost: f64) -> Self {
        Self { inner, design, cost }
    }
}

impl<N: Nuisances + ?Sized> Nuisances for CostAdjusted<'_, N> {
    fn conditional_mean(&self, record: usize, x: f64, group: GroupId) -> Result<f64> {
        let m = self.inner.conditional_mean(record, x, group)?;
        Ok(if self.cost != 0.0 && self.design.baseline_treats(x, group) {
            m - self.cost
        } else {
            m
        })
    }

    fn propensities(&self, record: usize, x: f64) -> Vec<f64> {
        self.inner.propensities(record, x)
    }
}

/// Smoother settings for the outcome curves and the group propensity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NuisanceConfig {
    pub outcome: LocalPolyConfig,
    pub propensity_degree: usize,
    pub clamp: f64,
}

impl Default for NuisanceConfig {
    fn default() -> Self {
        Self {
            outcome: LocalPolyConfig::linear(),
            propensity_degree: DEFAULT_BASIS_DEGREE,
            clamp: DEFAULT_CLAMP,
        }
    }
}

/// Models trained on every fold except one.
#[derive(Debug, Clone)]
pub struct FoldModels {
    pub propensity: PropensityModel,
    /// Per group: `[control side (x < c̃_g), treated side (x >= c̃_g)]`.
    pub curves: Vec<[Option<CurveFit>; 2]>,
}

#[derive(Debug, Clone)]
pub struct CrossfitNuisances {
    design: StudyDesign,
    folds: FoldAssignment,
    models: Vec<FoldModels>,
}

impl CrossfitNuisances {
    pub fn folds(&self) -> &FoldAssignment {
        &self.folds
    }

    pub fn fold_models(&self, fold: usize) -> &FoldModels {
        &self.models[fold]
    }

    fn curve(&self, fold: usize, x: f64, g: GroupId) -> Result<&CurveFit> {
        let treated = self.design.baseline_treats(x, g);
        self.models[fold].curves[g.0][treated as usize]
            .as_ref()
            .ok_or(Error::MissingCurve {
                group: g,
                side: if treated { "treated" } else { "control" },
                fold,
            })
    }
}

impl Nuisances for CrossfitNuisances {
    fn conditional_mean(&self, record: usize, x: f64, group: GroupId) -> Result<f64> {
        let fold = self.folds.fold_of(record);
        self.curve(fold, x, group)?
            .value(x)
            .stage(|| format!("outcome curve for group {group}, fold {fold}"))
    }

    fn propensities(&self, record: usize, x: f64) -> Vec<f64> {
        self.models[self.folds.fold_of(record)].propensity.eval(x)
    }
}

/// Fits, for each fold, the group propensity and one outcome curve per
/// (group, side of its cutoff) on the remaining folds. Sides without enough
/// data are left empty and only fail when evaluated.
pub fn fit_crossfit_nuisances(
    dataset: &Dataset,
    folds: &FoldAssignment,
    config: &NuisanceConfig,
) -> Result<CrossfitNuisances> {
    if folds.as_slice().len() != dataset.len() {
        return Err(Error::InvalidConfig("fold assignment does not match dataset".into()));
    }
    config.outcome.validate()?;
    let design = dataset.design();
    let q = design.num_groups();
    let models = (0..folds.num_folds())
        .into_par_iter()
        .map(|fold| -> Result<FoldModels> {
            let train: Vec<_> = dataset
                .records()
                .iter()
                .zip(folds.as_slice())
                .filter(|(_, &f)| f != fold)
                .map(|(r, _)| r)
                .collect();
            let points: Vec<(f64, GroupId)> = train.iter().map(|r| (r.x, r.group)).collect();
            let propensity = PropensityModel::fit(&points, q, config.propensity_degree, config.clamp)
                .stage(|| format!("group propensity, fold {fold}"))?;
            let mut curves = Vec::with_capacity(q);
            for g in design.groups() {
                let mut sides: [Option<CurveFit>; 2] = [None, None];
                for (side, slot) in sides.iter_mut().enumerate() {
                    let pts: Vec<(f64, f64)> = train
                        .iter()
                        .filter(|r| r.group == g && r.treated as usize == side)
                        .map(|r| (r.x, r.y))
                        .collect();
                    *slot = match fit_local_poly(&pts, config.outcome) {
                        Ok(fit) => Some(fit),
                        Err(Error::InsufficientData(_)) | Err(Error::DegenerateSpread) => None,
                        Err(e) => return Err(e.in_stage(format!("outcome curve for group {g}, fold {fold}"))),
                    };
                }
                curves.push(sides);
            }
            Ok(FoldModels { propensity, curves })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CrossfitNuisances {
        design: design.clone(),
        folds: folds.clone(),
        models,
    })
}

/// Per-record doubly-robust extrapolation scores, `n x Q` each.
#[derive(Debug, Clone, PartialEq)]
pub struct DRScores {
    num_groups: usize,
    gamma1: Vec<f64>,
    gamma0: Vec<f64>,
}

impl DRScores {
    /// `Γ̂⁽¹⁾_{ig}`: score for moving group `g`'s cutoff down past record `i`.
    pub fn gamma1(&self, record: usize, g: GroupId) -> f64 {
        self.gamma1[record * self.num_groups + g.0]
    }

    /// `Γ̂⁽⁰⁾_{ig}`: score for moving group `g`'s cutoff up past record `i`.
    pub fn gamma0(&self, record: usize, g: GroupId) -> f64 {
        self.gamma0[record * self.num_groups + g.0]
    }

    pub fn len(&self) -> usize {
        self.gamma1.len() / self.num_groups.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.gamma1.is_empty()
    }
}

pub fn compute_dr_scores<N: Nuisances + ?Sized>(dataset: &Dataset, nuisances: &N) -> Result<DRScores> {
    let design = dataset.design();
    let q = design.num_groups();
    let rows = dataset
        .records()
        .par_iter()
        .enumerate()
        .map(|(i, r)| -> Result<(Vec<f64>, Vec<f64>)> {
            let mut g1 = vec![0.0; q];
            let mut g0 = vec![0.0; q];
            let Some(j) = design.interval_index(r.x) else {
                return Ok((g1, g0));
            };
            let h = r.group.0;
            let (lower, upper) = (GroupId(j), GroupId(j + 1));
            let needs_ratio = h == j || h == j + 1;
            let e = if needs_ratio { nuisances.propensities(i, r.x) } else { Vec::new() };
            // extrapolating groups above j downward, with group j as reference
            if h >= j {
                let m = nuisances.conditional_mean(i, r.x, lower)?;
                if h == j {
                    for (g, slot) in g1.iter_mut().enumerate().skip(j + 1) {
                        *slot = e[g] / e[j] * (r.y - m);
                    }
                } else {
                    g1[h] = m;
                }
            }
            // extrapolating groups at or below j upward, with group j+1 as reference
            if h <= j + 1 {
                let m = nuisances.conditional_mean(i, r.x, upper)?;
                if h == j + 1 {
                    for (g, slot) in g0.iter_mut().enumerate().take(j + 1) {
                        *slot = e[g] / e[j + 1] * (r.y - m);
                    }
                } else {
                    g0[h] = m;
                }
            }
            Ok((g1, g0))
        })
        .collect::<Result<Vec<_>>>()
        .stage(|| "doubly-robust scores".to_string())?;
    let mut gamma1 = Vec::with_capacity(rows.len() * q);
    let mut gamma0 = Vec::with_capacity(rows.len() * q);
    for (a, b) in rows {
        gamma1.extend(a);
        gamma0.extend(b);
    }
    Ok(DRScores {
        num_groups: q,
        gamma1,
        gamma0,
    })
}

/// `Î_iden`: sample average of outcomes where policy and baseline agree.
pub fn identified_component(dataset: &Dataset, policy: &ThresholdPolicy, baseline: &ThresholdPolicy) -> f64 {
    let mut total = 0.0;
    for r in dataset.records() {
        if policy.treats(r.x, r.group) == baseline.treats(r.x, r.group) {
            total += r.y;
        }
    }
    total / dataset.len() as f64
}

/// `Ξ̂_DR`: the doubly-robust estimate of the extrapolated-but-identified
/// term, summed over every group's disagreement region.
pub fn dr_component(dataset: &Dataset, policy: &ThresholdPolicy, baseline: &ThresholdPolicy, scores: &DRScores) -> f64 {
    let mut total = 0.0;
    for (i, r) in dataset.records().iter().enumerate() {
        let mut row = 0.0;
        for g in dataset.design().groups() {
            match (policy.treats(r.x, g), baseline.treats(r.x, g)) {
                (true, false) => row += scores.gamma1(i, g),
                (false, true) => row += scores.gamma0(i, g),
                _ => {}
            }
        }
        total += row;
    }
    total / dataset.len() as f64
}

/// The three objective terms at one policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValueBreakdown {
    pub iden: f64,
    pub dr: f64,
    pub xi2_worst: f64,
    pub total: f64,
}

impl ValueBreakdown {
    pub fn new(iden: f64, dr: f64, xi2_worst: f64) -> Self {
        Self {
            iden,
            dr,
            xi2_worst,
            total: iden + dr + xi2_worst,
        }
    }
}
