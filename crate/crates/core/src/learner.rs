//! Worst-case policy learning by per-group grid search.
//!
//! Under a threshold policy each record's contribution depends on its own
//! group's cutoff only through indicators, so the objective
//! `Î_iden + Ξ̂_DR + min Ξ̂₂` splits into one term per group and each cutoff
//! can be optimized independently.
//!
//! Moving group `g`'s cutoff to `c < c̃_g` changes the objective by the sum,
//! over records with `x ∈ [c, c̃_g)`, of
//!
//! ```text
//! Γ¹_{ig} + 1(G_i = g) · (B_l(1, x_i, g, g'_i) - y_i)
//! ```
//!
//! and symmetrically with `Γ⁰` and `B_l(0, ·)` over `[c̃_g, c)` for `c > c̃_g`.
//! Prefix sums over the records sorted by `x` evaluate a whole grid in one pass.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, GroupId, StudyDesign, ThresholdPolicy, UtilityConfig};
use crate::error::{Error, Result, ResultExt};
use crate::estimator::{
    compute_dr_scores, dr_component, fit_crossfit_nuisances, identified_component, make_folds, CostAdjusted,
    CrossfitNuisances, DRScores, FoldAssignment, NuisanceConfig, ValueBreakdown, DEFAULT_FOLDS,
};
use crate::idbounds::{fit_bound_curves, reference_pair, worst_case_xi2, BoundCurves, BoundModel, DifferenceConfig, PairKey};

/// Objective values closer than this are treated as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GridMode {
    /// Every distinct observed running-variable value in `[c̃_1, c̃_Q]`.
    Observed,
    /// `m` equally spaced points spanning `[c̃_1, c̃_Q]`.
    Uniform(usize),
}

impl std::str::FromStr for GridMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("observed") {
            return Ok(GridMode::Observed);
        }
        let m = s
            .strip_prefix("uniform:")
            .or_else(|| s.strip_prefix("uniform(").and_then(|r| r.strip_suffix(')')))
            .and_then(|m| m.trim().parse::<usize>().ok())
            .ok_or_else(|| Error::InvalidConfig(format!("unknown grid mode `{s}`; use `observed` or `uniform:N`")))?;
        if m < 2 {
            return Err(Error::InvalidConfig(format!("uniform grid needs at least 2 points, got {m}")));
        }
        Ok(GridMode::Uniform(m))
    }
}

impl std::fmt::Display for GridMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GridMode::Observed => write!(f, "observed"),
            GridMode::Uniform(m) => write!(f, "uniform:{m}"),
        }
    }
}

/// Sorted, deduplicated candidate cutoffs per group.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateGrid {
    per_group: Vec<Vec<f64>>,
}

impl CandidateGrid {
    pub fn group(&self, g: GroupId) -> &[f64] {
        &self.per_group[g.0]
    }

    pub fn num_groups(&self) -> usize {
        self.per_group.len()
    }
}

pub fn candidate_grid(dataset: &Dataset, mode: GridMode) -> CandidateGrid {
    let design = dataset.design();
    let (lo, hi) = (design.lowest_cutoff(), design.highest_cutoff());
    let mut points: Vec<f64> = match mode {
        GridMode::Observed => dataset
            .records()
            .iter()
            .map(|r| r.x)
            .filter(|&x| x >= lo && x <= hi)
            .collect(),
        GridMode::Uniform(m) => (0..m)
            .map(|k| if k + 1 == m { hi } else { lo + (hi - lo) * k as f64 / (m - 1) as f64 })
            .collect(),
    };
    points.extend_from_slice(design.cutoffs());
    points.sort_by(f64::total_cmp);
    points.dedup();
    CandidateGrid {
        per_group: vec![points; design.num_groups()],
    }
}

/// Group `g`'s share of the worst-case objective when its cutoff is `c`,
/// evaluated record by record.
///
/// The share is the agreement and lower-bound terms of group-`g` records plus
/// the `g`-th summand of the doubly-robust term, which also draws residuals
/// from the reference groups' records.
pub fn group_objective(
    dataset: &Dataset,
    g: GroupId,
    c: f64,
    scores: &DRScores,
    bounds: &BoundModel,
) -> f64 {
    let design = dataset.design();
    let cg = design.cutoff(g);
    let mut total = 0.0;
    for (i, r) in dataset.records().iter().enumerate() {
        let new = r.x >= c;
        let base = r.x >= cg;
        if new != base {
            total += if new { scores.gamma1(i, g) } else { scores.gamma0(i, g) };
        }
        if r.group == g {
            total += match reference_pair(design, r.x, g, new) {
                None => r.y,
                Some(key) => bounds.lower(&key, r.x),
            };
        }
    }
    total / dataset.len() as f64
}

/// Objective of every candidate for one group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupTable {
    pub group: GroupId,
    pub baseline_cutoff: f64,
    pub learned_cutoff: f64,
    pub candidates: Vec<f64>,
    pub objective: Vec<f64>,
}

impl GroupTable {
    pub fn gain(&self) -> f64 {
        let at = |c: f64| self.objective[self.candidates.partition_point(|&v| v < c)];
        at(self.learned_cutoff) - at(self.baseline_cutoff)
    }
}

/// Records sorted by `x`, shared by every group search.
struct SortedRecords {
    order: Vec<usize>,
    xs: Vec<f64>,
}

impl SortedRecords {
    fn new(dataset: &Dataset) -> Self {
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        order.sort_by(|&a, &b| dataset.records()[a].x.total_cmp(&dataset.records()[b].x));
        let xs = order.iter().map(|&i| dataset.records()[i].x).collect();
        Self { order, xs }
    }

    /// Number of records with `x < t`.
    fn below(&self, t: f64) -> usize {
        self.xs.partition_point(|&x| x < t)
    }
}

fn search_group(
    dataset: &Dataset,
    sorted: &SortedRecords,
    g: GroupId,
    grid: &[f64],
    scores: &DRScores,
    bounds: &BoundModel,
) -> GroupTable {
    let design = dataset.design();
    let cg = design.cutoff(g);
    let n = dataset.len() as f64;
    let records = dataset.records();

    // prefix[k] sums the change terms of the k smallest-x records
    let mut lower = Vec::with_capacity(sorted.order.len() + 1);
    let mut raise = Vec::with_capacity(sorted.order.len() + 1);
    let (mut acc_l, mut acc_r) = (0.0, 0.0);
    lower.push(0.0);
    raise.push(0.0);
    for &i in &sorted.order {
        let r = &records[i];
        if r.x < cg {
            let mut delta = scores.gamma1(i, g);
            if r.group == g {
                if let Some(key) = reference_pair(design, r.x, g, true) {
                    delta += bounds.lower(&key, r.x) - r.y;
                }
            }
            acc_l += delta;
        } else {
            let mut delta = scores.gamma0(i, g);
            if r.group == g {
                if let Some(key) = reference_pair(design, r.x, g, false) {
                    delta += bounds.lower(&key, r.x) - r.y;
                }
            }
            acc_r += delta;
        }
        lower.push(acc_l);
        raise.push(acc_r);
    }

    let base: f64 = records.iter().filter(|r| r.group == g).map(|r| r.y).sum();
    let at_base = sorted.below(cg);
    let objective: Vec<f64> = grid
        .iter()
        .map(|&c| {
            let k = sorted.below(c);
            let change = if c < cg {
                lower[at_base] - lower[k]
            } else {
                raise[k] - raise[at_base]
            };
            (base + change) / n
        })
        .collect();

    let best = objective.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut pick = None::<f64>;
    for (&c, &v) in grid.iter().zip(&objective) {
        if v < best - TIE_TOLERANCE {
            continue;
        }
        pick = Some(match pick {
            None => c,
            Some(p) => {
                let (dc, dp) = ((c - cg).abs(), (p - cg).abs());
                if dc < dp || (dc == dp && c < p) {
                    c
                } else {
                    p
                }
            }
        });
    }
    GroupTable {
        group: g,
        baseline_cutoff: cg,
        learned_cutoff: pick.unwrap_or(cg),
        candidates: grid.to_vec(),
        objective,
    }
}

/// Everything `learn_policy` needs besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnConfig {
    pub folds: usize,
    pub seed: u64,
    pub grid: GridMode,
    pub nuisance: NuisanceConfig,
    pub difference: DifferenceConfig,
    pub multiplier: f64,
    pub cost: f64,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            folds: DEFAULT_FOLDS,
            seed: 0,
            grid: GridMode::Observed,
            nuisance: NuisanceConfig::default(),
            difference: DifferenceConfig::default(),
            multiplier: 1.0,
            cost: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LearnedPolicy {
    pub policy: ThresholdPolicy,
    pub breakdown: ValueBreakdown,
    pub baseline_breakdown: ValueBreakdown,
    pub tables: Vec<GroupTable>,
    pub multiplier: f64,
    pub cost: f64,
    /// Effective smoothness per required pair.
    pub lambda: BTreeMap<PairKey, f64>,
    /// `(2/n) Σ_i max λ_eff |x_i - c̃_{g*}|`, the bound-width term of the
    /// optimality gap. Reported as a diagnostic only.
    pub gap_diagnostic: f64,
}

impl LearnedPolicy {
    pub fn changes(&self) -> Vec<f64> {
        self.tables.iter().map(|t| t.learned_cutoff - t.baseline_cutoff).collect()
    }
}

/// Full objective breakdown of `policy` relative to the baseline.
pub fn evaluate_policy(dataset: &Dataset, policy: &ThresholdPolicy, scores: &DRScores, bounds: &BoundModel) -> ValueBreakdown {
    let baseline = ThresholdPolicy::baseline(dataset.design());
    ValueBreakdown::new(
        identified_component(dataset, policy, &baseline),
        dr_component(dataset, policy, &baseline, scores),
        worst_case_xi2(dataset, policy, bounds),
    )
}

/// Joint search over the product of per-group grids. Exponential in the
/// number of groups; meant for checking separability on small problems.
///
/// Ties within [`TIE_TOLERANCE`] of the best total go to the policy whose
/// cutoffs, group by group, are closest to the baseline and then smaller,
/// the same rule the per-group search applies.
pub fn joint_search(dataset: &Dataset, grid: &CandidateGrid, scores: &DRScores, bounds: &BoundModel) -> (ThresholdPolicy, f64) {
    let design = dataset.design();
    let q = design.num_groups();
    let mut idx = vec![0usize; q];
    let mut evaluated: Vec<(Vec<f64>, f64)> = Vec::new();
    'product: loop {
        let cuts: Vec<f64> = (0..q).map(|g| grid.group(GroupId(g))[idx[g]]).collect();
        let policy = ThresholdPolicy::new(design, cuts.clone()).expect("grid inside the overlap class");
        evaluated.push((cuts, evaluate_policy(dataset, &policy, scores, bounds).total));
        let mut g = 0;
        loop {
            if g == q {
                break 'product;
            }
            idx[g] += 1;
            if idx[g] < grid.group(GroupId(g)).len() {
                break;
            }
            idx[g] = 0;
            g += 1;
        }
    }
    let top = evaluated.iter().map(|e| e.1).fold(f64::NEG_INFINITY, f64::max);
    let tie_key = |cuts: &[f64]| -> Vec<(f64, f64)> {
        cuts.iter()
            .zip(design.cutoffs())
            .map(|(&c, &base)| ((c - base).abs(), c))
            .collect()
    };
    let (cuts, v) = evaluated
        .into_iter()
        .filter(|e| e.1 >= top - TIE_TOLERANCE)
        .min_by(|a, b| {
            tie_key(&a.0)
                .partial_cmp(&tie_key(&b.0))
                .expect("finite cutoffs")
        })
        .expect("nonempty grid");
    (ThresholdPolicy::new(design, cuts).expect("grid inside the overlap class"), v)
}

/// Solves the worst-case problem for fixed scores and bounds.
pub fn optimize(
    dataset: &Dataset,
    grid: &CandidateGrid,
    scores: &DRScores,
    bounds: &BoundModel,
) -> Result<(ThresholdPolicy, ValueBreakdown, ValueBreakdown, Vec<GroupTable>)> {
    let design = dataset.design();
    let sorted = SortedRecords::new(dataset);
    let tables: Vec<GroupTable> = design
        .groups()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|g| search_group(dataset, &sorted, g, grid.group(g), scores, bounds))
        .collect();
    let baseline = ThresholdPolicy::baseline(design);
    let baseline_breakdown = evaluate_policy(dataset, &baseline, scores, bounds);
    let policy = ThresholdPolicy::new(design, tables.iter().map(|t| t.learned_cutoff).collect())?;
    let breakdown = evaluate_policy(dataset, &policy, scores, bounds);
    if breakdown.total < baseline_breakdown.total {
        // only reachable through rounding between the prefix sums and the
        // direct evaluation when every gain is at the tie tolerance
        log::debug!(
            "learned objective {} below baseline {} by rounding; keeping baseline",
            breakdown.total,
            baseline_breakdown.total
        );
        let tables = tables
            .into_iter()
            .map(|t| GroupTable {
                learned_cutoff: t.baseline_cutoff,
                ..t
            })
            .collect();
        return Ok((baseline, baseline_breakdown, baseline_breakdown, tables));
    }
    Ok((policy, breakdown, baseline_breakdown, tables))
}

/// Policy-independent state: folds, cross-fitted nuisances on the raw
/// outcome, difference curves with base smoothness, and the candidate grid.
#[derive(Debug, Clone)]
pub struct FittedPipeline {
    dataset: Dataset,
    folds: FoldAssignment,
    nuisances: CrossfitNuisances,
    curves: BoundCurves,
    grid: CandidateGrid,
}

impl FittedPipeline {
    pub fn fit(dataset: &Dataset, config: &LearnConfig) -> Result<Self> {
        let folds = make_folds(dataset, config.folds, config.seed).stage(|| "fold assignment".into())?;
        let nuisances =
            fit_crossfit_nuisances(dataset, &folds, &config.nuisance).stage(|| "nuisance estimation".into())?;
        let curves = fit_bound_curves(dataset, &nuisances, &config.difference).stage(|| "bound estimation".into())?;
        Ok(Self {
            dataset: dataset.clone(),
            folds,
            nuisances,
            curves,
            grid: candidate_grid(dataset, config.grid),
        })
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn design(&self) -> &StudyDesign {
        self.dataset.design()
    }

    pub fn folds(&self) -> &FoldAssignment {
        &self.folds
    }

    pub fn nuisances(&self) -> &CrossfitNuisances {
        &self.nuisances
    }

    pub fn curves(&self) -> &BoundCurves {
        &self.curves
    }

    pub fn grid(&self) -> &CandidateGrid {
        &self.grid
    }

    /// Outcome `y - C·w` with the matching shifted nuisances and their scores.
    pub fn scores(&self, cost: f64) -> Result<(Dataset, DRScores)> {
        let utility = UtilityConfig::new(cost)?;
        let data = self.dataset.with_utility(&utility);
        let adjusted = CostAdjusted::new(&self.nuisances, self.design(), cost);
        let scores = compute_dr_scores(&data, &adjusted).stage(|| "score computation".into())?;
        Ok((data, scores))
    }

    pub fn bounds(&self, multiplier: f64) -> Result<BoundModel> {
        BoundModel::from_curves(self.design(), &self.curves, multiplier)
    }

    pub fn learn(&self, multiplier: f64, cost: f64) -> Result<LearnedPolicy> {
        let (data, scores) = self.scores(cost)?;
        self.learn_with(&data, &scores, multiplier, cost)
    }

    fn learn_with(&self, data: &Dataset, scores: &DRScores, multiplier: f64, cost: f64) -> Result<LearnedPolicy> {
        let bounds = self.bounds(multiplier)?;
        let (policy, breakdown, baseline_breakdown, tables) =
            optimize(data, &self.grid, scores, &bounds).stage(|| "policy search".into())?;
        let lambda = bounds.pairs().map(|(k, _)| (*k, bounds.effective_lambda(k))).collect();
        Ok(LearnedPolicy {
            policy,
            breakdown,
            baseline_breakdown,
            tables,
            multiplier,
            cost,
            lambda,
            gap_diagnostic: gap_diagnostic(data, &bounds),
        })
    }
}

pub fn gap_diagnostic(dataset: &Dataset, bounds: &BoundModel) -> f64 {
    let total: f64 = dataset
        .records()
        .iter()
        .map(|r| {
            bounds
                .pairs()
                .map(|(k, p)| bounds.effective_lambda(k) * (r.x - p.anchor).abs())
                .fold(0.0, f64::max)
        })
        .sum();
    2.0 * total / dataset.len() as f64
}

pub fn learn_policy(dataset: &Dataset, config: &LearnConfig) -> Result<LearnedPolicy> {
    FittedPipeline::fit(dataset, config)?.learn(config.multiplier, config.cost)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub group: String,
    #[serde(rename = "M")]
    pub multiplier: f64,
    #[serde(rename = "C")]
    pub cost: f64,
    pub baseline_cutoff: f64,
    pub learned_cutoff: f64,
    pub change: f64,
    pub objective_gain: f64,
}

/// Learns a policy for every `(M, C)` pair, reusing nuisances and base λ.
/// Rows are ordered by group rank, then `M`, then `C`; duplicate list
/// entries produce duplicate rows.
pub fn sensitivity_sweep(pipeline: &FittedPipeline, multipliers: &[f64], costs: &[f64]) -> Result<Vec<SweepRow>> {
    if multipliers.is_empty() || costs.is_empty() {
        return Err(Error::InvalidConfig("sweep needs at least one multiplier and one cost".into()));
    }
    let design = pipeline.design();
    let per_cost = costs
        .par_iter()
        .map(|&cost| -> Result<Vec<(usize, usize, LearnedPolicy)>> {
            let (data, scores) = pipeline.scores(cost)?;
            multipliers
                .iter()
                .enumerate()
                .map(|(mi, &m)| Ok((mi, 0, pipeline.learn_with(&data, &scores, m, cost)?)))
                .collect()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut cells = Vec::new();
    for (ci, rows) in per_cost.into_iter().enumerate() {
        for (mi, _, learned) in rows {
            cells.push((mi, ci, learned));
        }
    }
    let mut rows = Vec::with_capacity(cells.len() * design.num_groups());
    for g in design.groups() {
        let mut group_cells: Vec<_> = cells.iter().collect();
        group_cells.sort_by(|a, b| {
            let (ma, mb) = (multipliers[a.0], multipliers[b.0]);
            let (ca, cb) = (costs[a.1], costs[b.1]);
            ma.total_cmp(&mb).then(ca.total_cmp(&cb)).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1))
        });
        for (mi, ci, learned) in group_cells {
            let t = &learned.tables[g.0];
            rows.push(SweepRow {
                group: design.label(g).to_string(),
                multiplier: multipliers[*mi],
                cost: costs[*ci],
                baseline_cutoff: t.baseline_cutoff,
                learned_cutoff: t.learned_cutoff,
                change: t.learned_cutoff - t.baseline_cutoff,
                objective_gain: t.gain(),
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Record;
    use crate::estimator::OracleNuisances;
    use crate::idbounds::{required_pairs, SmoothnessParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

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

    fn random_problem(seed: u64, q: usize, n: usize, reverse: bool) -> (Dataset, DRScores, BoundModel) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let design = StudyDesign::new((0..q).map(|g| (format!("g{g}"), g as f64))).unwrap();
        let mut rows: Vec<_> = (0..n)
            .map(|_| {
                let x = rng.random_range(-0.5..q as f64 - 0.5);
                (x, rng.random_range(0..q), rng.random_range(-1.0..1.0))
            })
            .collect();
        if reverse {
            rows.reverse();
        }
        let ds = toy(&design, &rows);
        let a: Vec<f64> = (0..q).map(|_| rng.random_range(-1.0..1.0)).collect();
        let oracle = OracleNuisances::new(
            move |x: f64, g: GroupId| a[g.0] + 0.3 * x,
            move |x: f64| {
                let mut p: Vec<f64> = (0..q).map(|g| 1.0 + 0.2 * (x - g as f64).cos()).collect();
                let s: f64 = p.iter().sum();
                p.iter_mut().for_each(|v| *v /= s);
                p
            },
        );
        let scores = compute_dr_scores(&ds, &oracle).unwrap();
        let keys = required_pairs(&design);
        let boundary = keys.iter().map(|&k| (k, rng.random_range(-0.5..0.5))).collect();
        let lambda = keys.iter().map(|&k| (k, rng.random_range(0.0..0.3))).collect();
        let bounds = BoundModel::from_parts(&design, &boundary, &SmoothnessParams { lambda, multiplier: 1.0 }).unwrap();
        (ds, scores, bounds)
    }

    #[test]
    fn grid_construction() {
        let d = StudyDesign::new([("1", 0.0), ("2", 1.0)]).unwrap();
        let ds = toy(&d, &[(0.2, 0, 0.0), (0.7, 1, 0.0), (1.5, 1, 0.0), (0.7, 0, 1.0)]);
        let g = candidate_grid(&ds, GridMode::Observed);
        assert_eq!(g.group(GroupId(0)), &[0.0, 0.2, 0.7, 1.0]);
        assert_eq!(g.group(GroupId(1)), &[0.0, 0.2, 0.7, 1.0]);
        let u = candidate_grid(&ds, GridMode::Uniform(3));
        assert_eq!(u.group(GroupId(0)), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn grid_mode_parsing() {
        assert_eq!("observed".parse::<GridMode>().unwrap(), GridMode::Observed);
        assert_eq!("uniform:25".parse::<GridMode>().unwrap(), GridMode::Uniform(25));
        assert_eq!("uniform(3)".parse::<GridMode>().unwrap(), GridMode::Uniform(3));
        assert!("uniform:1".parse::<GridMode>().is_err());
        assert!("dense".parse::<GridMode>().is_err());
        assert_eq!(GridMode::Uniform(7).to_string().parse::<GridMode>().unwrap(), GridMode::Uniform(7));
    }

    #[test]
    fn baseline_share_is_group_mean_over_n() {
        let (ds, scores, bounds) = random_problem(3, 3, 40, false);
        for g in ds.design().groups() {
            let expected: f64 =
                ds.records().iter().filter(|r| r.group == g).map(|r| r.y).sum::<f64>() / ds.len() as f64;
            let got = group_objective(&ds, g, ds.design().cutoff(g), &scores, &bounds);
            assert!((got - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn single_group_share_brute_force() {
        let d = StudyDesign::new([("1", 0.0), ("2", 1.0)]).unwrap();
        let ds = toy(&d, &[(0.3, 1, 2.0), (0.6, 1, -1.0), (0.8, 0, 4.0), (1.4, 1, 0.5)]);
        let oracle = OracleNuisances::new(|x, g: GroupId| x + g.0 as f64, |_x| vec![0.4, 0.6]);
        let scores = compute_dr_scores(&ds, &oracle).unwrap();
        let k = PairKey::new(1, GroupId(1), GroupId(0));
        let keys = required_pairs(&d);
        let boundary = keys.iter().map(|&k| (k, 0.25)).collect();
        let lambda = keys.iter().map(|&k| (k, 0.5)).collect();
        let bounds = BoundModel::from_parts(&d, &boundary, &SmoothnessParams { lambda, multiplier: 1.0 }).unwrap();
        // group 2 lowered to 0.5: records at 0.6 and 0.8 fall in [0.5, 1)
        let iden = (2.0 + 0.5) / 4.0;
        let dr = (0.6 / 0.4 * (4.0 - 0.8) + (0.6 + 0.0)) / 4.0;
        let xi2 = (0.25 - 0.5 * (0.6f64 - 1.0).abs()) / 4.0;
        let got = group_objective(&ds, GroupId(1), 0.5, &scores, &bounds);
        assert!((got - (iden + dr + xi2)).abs() < 1e-12, "{got}");
        assert!((bounds.lower(&k, 0.6) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn shares_sum_to_joint_objective_and_search_is_separable() {
        for seed in 0..30 {
            let q = 2 + (seed as usize % 2);
            let (ds, scores, bounds) = random_problem(seed, q, 30, false);
            let grid = candidate_grid(&ds, GridMode::Uniform(6));
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
            let cuts: Vec<f64> = (0..q).map(|_| rng.random_range(0.0..(q - 1) as f64)).collect();
            let policy = ThresholdPolicy::new(ds.design(), cuts.clone()).unwrap();
            let sum: f64 = ds.design().groups().map(|g| group_objective(&ds, g, cuts[g.0], &scores, &bounds)).sum();
            let joint = evaluate_policy(&ds, &policy, &scores, &bounds).total;
            assert!((sum - joint).abs() < 1e-12, "seed {seed}: {sum} vs {joint}");

            let (learned, _, _, tables) = optimize(&ds, &grid, &scores, &bounds).unwrap();
            for t in &tables {
                for (&c, &v) in t.candidates.iter().zip(&t.objective) {
                    assert!((v - group_objective(&ds, t.group, c, &scores, &bounds)).abs() < 1e-12);
                }
            }
            let (best, best_value) = joint_search(&ds, &grid, &scores, &bounds);
            let learned_value = evaluate_policy(&ds, &learned, &scores, &bounds).total;
            assert!((learned_value - best_value).abs() < 1e-12);
            if learned.cutoffs() != best.cutoffs() {
                // only ties may differ
                let v = evaluate_policy(&ds, &best, &scores, &bounds).total;
                assert!((v - learned_value).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_outcomes_keep_baseline() {
        let d = StudyDesign::new([("1", 0.0), ("2", 1.0)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rows: Vec<_> = (0..60).map(|i| (rng.random_range(-0.5..1.5), i % 2, 3.0)).collect();
        let ds = toy(&d, &rows);
        let oracle = OracleNuisances::new(|_x, _g| 3.0, |_x| vec![0.5, 0.5]);
        let scores = compute_dr_scores(&ds, &oracle).unwrap();
        let keys = required_pairs(&d);
        let zero: BTreeMap<_, _> = keys.iter().map(|&k| (k, 0.0)).collect();
        let bounds = BoundModel::from_parts(&d, &zero, &SmoothnessParams { lambda: zero.clone(), multiplier: 1.0 }).unwrap();
        let (policy, b, base, _) = optimize(&ds, &candidate_grid(&ds, GridMode::Observed), &scores, &bounds).unwrap();
        assert_eq!(policy, ThresholdPolicy::baseline(&d));
        assert_eq!(b, base);
    }

    #[test]
    fn tie_break_prefers_nearest_then_smaller() {
        let d = StudyDesign::new([("1", 0.0), ("2", 1.0)]).unwrap();
        // no records between the cutoffs: every candidate ties
        let ds = toy(&d, &[(-0.5, 0, 1.0), (1.5, 1, 2.0), (-0.2, 1, 0.0), (1.2, 0, 0.0)]);
        let oracle = OracleNuisances::new(|_x, _g| 0.0, |_x| vec![0.5, 0.5]);
        let scores = compute_dr_scores(&ds, &oracle).unwrap();
        let keys = required_pairs(&d);
        let zero: BTreeMap<_, _> = keys.iter().map(|&k| (k, 0.0)).collect();
        let bounds = BoundModel::from_parts(&d, &zero, &SmoothnessParams { lambda: zero.clone(), multiplier: 1.0 }).unwrap();
        let sorted = SortedRecords::new(&ds);
        let t = search_group(&ds, &sorted, GroupId(0), &[0.0, 0.25, 0.5, 0.75, 1.0], &scores, &bounds);
        assert_eq!(t.learned_cutoff, 0.0);
        // for a baseline off the grid, equidistant candidates resolve to the smaller
        let t = search_group(&ds, &sorted, GroupId(0), &[-0.25, 0.25, 1.0], &scores, &bounds);
        assert_eq!(t.learned_cutoff, -0.25);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]
            #[test]
            fn learned_never_below_baseline(seed in 0u64..10_000, q in 2usize..4, m in 0.0f64..4.0) {
                let (ds, scores, bounds) = random_problem(seed, q, 40, false);
                let bounds = bounds.with_multiplier(m);
                let grid = candidate_grid(&ds, GridMode::Observed);
                let (_, b, base, _) = optimize(&ds, &grid, &scores, &bounds).unwrap();
                prop_assert!(b.total >= base.total);
            }

            #[test]
            fn search_ignores_record_order(seed in 0u64..10_000) {
                let (ds, scores, bounds) = random_problem(seed, 3, 30, false);
                let (rev, rev_scores, _) = random_problem(seed, 3, 30, true);
                let grid = candidate_grid(&ds, GridMode::Observed);
                let (p1, b1, _, _) = optimize(&ds, &grid, &scores, &bounds).unwrap();
                let (p2, b2, _, _) = optimize(&rev, &grid, &rev_scores, &bounds).unwrap();
                prop_assert_eq!(p1, p2);
                prop_assert!((b1.total - b2.total).abs() < 1e-12);
            }
        }
    }
}
