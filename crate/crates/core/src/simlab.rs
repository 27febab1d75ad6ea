//! Two-group simulation scenarios with a known value function, and Monte
//! Carlo regret experiments built on them.
//!
//! Both scenarios draw `X ~ U(-1000, -1)`, assign group 2 when
//! `0.01 X + 5 + ε > 0` with `ε ~ N(0, 10²)`, use cutoffs `c̃_1 = -850` and
//! `c̃_2 = -571`, and generate
//!
//! ```text
//! Y = γ_Wᵀ g(X) - d(W, X) · 1(G = 1) + N(0, 0.3²)
//! ```
//!
//! Scenario A is calibrated so that the baseline is, up to coefficient
//! rounding, the best threshold policy; under scenario B it is far from it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, GroupId, Record, StudyDesign, ThresholdPolicy};
use crate::error::{Error, Result};
use crate::learner::{FittedPipeline, LearnConfig};

pub const GENERATOR_NAME: &str = "ChaCha8Rng";
pub const DEFAULT_MC_SIZE: usize = 1_000_000;
pub const DEFAULT_ORACLE_GRID: usize = 1000;
pub const MAX_FAILURE_RATE: f64 = 0.05;
pub const REPORT_VERSION: u32 = 1;

const X_LOW: f64 = -1000.0;
const X_HIGH: f64 = -1.0;
const CUTOFFS: [f64; 2] = [-850.0, -571.0];
const GROUP_NOISE_SD: f64 = 10.0;
const OUTCOME_NOISE_SD: f64 = 0.3;
const GAMMA1: [f64; 4] = [0.96, 5.31e-4, 1.10e-6, 1.15e-9];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ScenarioId {
    A,
    B,
}

impl std::str::FromStr for ScenarioId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" | "a" => Ok(ScenarioId::A),
            "B" | "b" => Ok(ScenarioId::B),
            other => Err(Error::InvalidConfig(format!("unknown scenario `{other}`; use A or B"))),
        }
    }
}

impl std::fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ScenarioId::A => "A",
            ScenarioId::B => "B",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioSpec {
    pub id: ScenarioId,
    pub n: usize,
    pub cutoffs: [f64; 2],
    pub group_noise_sd: f64,
    pub outcome_noise_sd: f64,
    /// Shift applied to `X` inside the cubic basis.
    pub basis_center: f64,
    pub gamma0: [f64; 4],
    pub gamma1: [f64; 4],
    /// `d(w, x) = 0.2 + e^{0.01 x} + diff_control · (1 - w)`.
    pub diff_control: f64,
}

impl ScenarioSpec {
    pub fn new(id: ScenarioId, n: usize) -> Self {
        let (basis_center, gamma0, diff_control) = match id {
            ScenarioId::A => (164.43, [-1.99, -1.00e-2, -1.20e-5, -4.59e-9], 0.3),
            ScenarioId::B => (0.0, [-1.94, -1.00e-2, -1.20e-5, -4.59e-9], -0.1),
        };
        Self {
            id,
            n,
            cutoffs: CUTOFFS,
            group_noise_sd: GROUP_NOISE_SD,
            outcome_noise_sd: OUTCOME_NOISE_SD,
            basis_center,
            gamma0,
            gamma1: GAMMA1,
            diff_control,
        }
    }

    pub fn design(&self) -> StudyDesign {
        StudyDesign::new([("1", self.cutoffs[0]), ("2", self.cutoffs[1])]).expect("scenario cutoffs are valid")
    }

    fn basis(&self, x: f64) -> [f64; 4] {
        let u = x - self.basis_center;
        [1.0, u, u * u, u * u * u]
    }

    /// `γ_wᵀ g(x)`, the group-2 potential outcome mean.
    pub fn baseline_mean(&self, w: bool, x: f64) -> f64 {
        let b = self.basis(x);
        let gamma = if w { &self.gamma1 } else { &self.gamma0 };
        gamma.iter().zip(b).map(|(c, v)| c * v).sum()
    }

    /// `d(w, x) = m(w, x, 2) - m(w, x, 1)`.
    pub fn difference(&self, w: bool, x: f64) -> f64 {
        0.2 + (0.01 * x).exp() + if w { 0.0 } else { self.diff_control }
    }

    /// `m(w, x, g)`, the potential outcome mean.
    pub fn potential_mean(&self, w: bool, x: f64, g: GroupId) -> f64 {
        let m = self.baseline_mean(w, x);
        if g.0 == 0 {
            m - self.difference(w, x)
        } else {
            m
        }
    }

    /// `m̃(x, g)`, the observed conditional mean under the baseline.
    pub fn observed_mean(&self, x: f64, g: GroupId) -> f64 {
        self.potential_mean(x >= self.cutoffs[g.0], x, g)
    }

    /// `(P(G = 1 | x), P(G = 2 | x))`.
    pub fn propensity(&self, x: f64) -> [f64; 2] {
        let p2 = statrs::function::erf::erfc(-(0.01 * x + 5.0) / self.group_noise_sd / std::f64::consts::SQRT_2) / 2.0;
        [1.0 - p2, p2]
    }
}

fn draw_x_g<R: Rng>(spec: &ScenarioSpec, rng: &mut R) -> (f64, GroupId) {
    let x = rng.random_range(X_LOW..X_HIGH);
    let eps: f64 = rng.sample::<f64, _>(StandardNormal) * spec.group_noise_sd;
    let g = if 0.01 * x + 5.0 + eps > 0.0 { GroupId(1) } else { GroupId(0) };
    (x, g)
}

/// Draws `spec.n` records from the scenario's data-generating process.
pub fn generate(spec: &ScenarioSpec, seed: u64) -> Dataset {
    let design = spec.design();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, spec.outcome_noise_sd).expect("positive noise scale");
    let records = (0..spec.n)
        .map(|_| {
            let (x, group) = draw_x_g(spec, &mut rng);
            let treated = design.baseline_treats(x, group);
            let y = spec.potential_mean(treated, x, group) + noise.sample(&mut rng);
            Record { x, group, treated, y }
        })
        .collect();
    Dataset::new(records, design, 0).expect("generated data respects the design")
}

/// Fixed Monte Carlo draws of `(X, G)` for evaluating true policy values.
///
/// Per group, the draws are sorted by `x` and the suffix sums of the
/// treatment effect `m(1, x, g) - m(0, x, g)` are stored, so the value of
/// any threshold policy costs two binary searches.
#[derive(Debug, Clone)]
pub struct ValueOracle {
    spec: ScenarioSpec,
    size: usize,
    xs: [Vec<f64>; 2],
    control_total: f64,
    // effect_suffix[g][k] = Σ_{j >= k} effect(xs[g][j])
    effect_suffix: [Vec<f64>; 2],
    raw: Vec<(f64, GroupId)>,
}

impl ValueOracle {
    pub fn new(spec: &ScenarioSpec, mc_size: usize, seed: u64) -> Result<Self> {
        if mc_size == 0 {
            return Err(Error::InvalidConfig("Monte Carlo size must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw: Vec<(f64, GroupId)> = (0..mc_size).map(|_| draw_x_g(spec, &mut rng)).collect();
        let mut xs: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
        for &(x, g) in &raw {
            xs[g.0].push(x);
        }
        let mut control_total = 0.0;
        let mut effect_suffix: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
        for g in 0..2 {
            xs[g].sort_by(f64::total_cmp);
            let mut suffix = vec![0.0; xs[g].len() + 1];
            for k in (0..xs[g].len()).rev() {
                let x = xs[g][k];
                let gid = GroupId(g);
                suffix[k] = suffix[k + 1] + spec.potential_mean(true, x, gid) - spec.potential_mean(false, x, gid);
                control_total += spec.potential_mean(false, x, gid);
            }
            effect_suffix[g] = suffix;
        }
        Ok(Self {
            spec: spec.clone(),
            size: mc_size,
            xs,
            control_total,
            effect_suffix,
            raw,
        })
    }

    pub fn spec(&self) -> &ScenarioSpec {
        &self.spec
    }

    /// Mean outcome of treating group `g` at `x >= c`, less its control mean.
    fn group_gain(&self, g: usize, c: f64) -> f64 {
        let k = self.xs[g].partition_point(|&x| x < c);
        self.effect_suffix[g][k]
    }

    /// `V(π)` under utility `y - C·w`.
    pub fn value(&self, policy: &ThresholdPolicy, cost: f64) -> f64 {
        let mut total = self.control_total;
        for g in 0..2 {
            let c = policy.cutoff(GroupId(g));
            let k = self.xs[g].partition_point(|&x| x < c);
            total += self.effect_suffix[g][k] - cost * (self.xs[g].len() - k) as f64;
        }
        total / self.size as f64
    }

    /// The same value summed record by record over the unsorted draws.
    pub fn value_direct(&self, policy: &ThresholdPolicy, cost: f64) -> f64 {
        let mut total = 0.0;
        for &(x, g) in &self.raw {
            let w = policy.treats(x, g);
            total += self.spec.potential_mean(w, x, g) - if w { cost } else { 0.0 };
        }
        total / self.size as f64
    }

    /// Share of the population `π` treats.
    pub fn treated_share(&self, policy: &ThresholdPolicy) -> f64 {
        let treated: usize = (0..2)
            .map(|g| self.xs[g].len() - self.xs[g].partition_point(|&x| x < policy.cutoff(GroupId(g))))
            .sum();
        treated as f64 / self.size as f64
    }

    /// Per-group argmax of the true value over `grid_size` equally spaced
    /// cutoffs in `[c̃_1, c̃_2]` plus the group's own baseline. Ties go to the
    /// cutoff nearest the baseline.
    pub fn oracle_policy(&self, grid_size: usize, cost: f64) -> ThresholdPolicy {
        let design = self.spec.design();
        let (lo, hi) = (self.spec.cutoffs[0], self.spec.cutoffs[1]);
        let mut grid: Vec<f64> = (0..grid_size)
            .map(|k| {
                if grid_size == 1 {
                    lo
                } else if k + 1 == grid_size {
                    hi
                } else {
                    lo + (hi - lo) * k as f64 / (grid_size - 1) as f64
                }
            })
            .collect();
        grid.sort_by(f64::total_cmp);
        let cutoffs = (0..2)
            .map(|g| {
                let base = self.spec.cutoffs[g];
                let score = |c: f64| {
                    let k = self.xs[g].partition_point(|&x| x < c);
                    self.group_gain(g, c) - cost * (self.xs[g].len() - k) as f64
                };
                let mut best = (base, score(base));
                for &c in &grid {
                    let v = score(c);
                    let closer = (c - base).abs() < (best.0 - base).abs();
                    if v > best.1 || (v == best.1 && closer) {
                        best = (c, v);
                    }
                }
                best.0
            })
            .collect();
        ThresholdPolicy::new(&design, cutoffs).expect("grid lies in the overlap class")
    }
}

pub fn true_value(policy: &ThresholdPolicy, spec: &ScenarioSpec, mc_size: usize, seed: u64) -> Result<f64> {
    Ok(ValueOracle::new(spec, mc_size, seed)?.value(policy, 0.0))
}

pub fn oracle_policy(spec: &ScenarioSpec, grid_size: usize, mc_size: usize, seed: u64) -> Result<ThresholdPolicy> {
    Ok(ValueOracle::new(spec, mc_size, seed)?.oracle_policy(grid_size, 0.0))
}

/// SplitMix64 finalizer, used to derive independent stream seeds.
pub fn mix_seed(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for replication `rep` of sample-size cell `n` in `scenario`:
/// `mix(mix(master ^ mix(tag)) ^ rep)` with `tag = scenario << 40 | n`.
pub fn replication_seed(master: u64, scenario: ScenarioId, n: usize, rep: usize) -> u64 {
    let tag = ((scenario as u64) << 40) | n as u64;
    mix_seed(mix_seed(master ^ mix_seed(tag)) ^ rep as u64)
}

/// Seed of the value oracle for `scenario`.
pub fn oracle_seed(master: u64, scenario: ScenarioId) -> u64 {
    mix_seed(master ^ mix_seed(u64::MAX - scenario as u64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenarios: Vec<ScenarioId>,
    pub sizes: Vec<usize>,
    pub multipliers: Vec<f64>,
    pub reps: usize,
    pub seed: u64,
    pub mc_size: usize,
    pub oracle_grid: usize,
    pub learn: LearnConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenarios: vec![ScenarioId::A, ScenarioId::B],
            sizes: vec![1000, 4000],
            multipliers: vec![1.0],
            reps: 200,
            seed: 0,
            mc_size: DEFAULT_MC_SIZE,
            oracle_grid: DEFAULT_ORACLE_GRID,
            learn: LearnConfig::default(),
        }
    }
}

/// True values of one replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReplicationOutcome {
    pub learned_value: f64,
    pub learned_cutoffs: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegretRow {
    pub scenario: ScenarioId,
    pub n: usize,
    #[serde(rename = "M")]
    pub multiplier: f64,
    pub regret_baseline_mean: f64,
    pub regret_baseline_se: f64,
    pub regret_oracle_mean: f64,
    pub regret_oracle_se: f64,
    pub reps: usize,
    pub failures: usize,
    #[serde(skip)]
    pub invalid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioTruth {
    pub scenario: ScenarioId,
    pub baseline_value: f64,
    pub oracle_value: f64,
    pub oracle_cutoffs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegretReport {
    pub rows: Vec<RegretRow>,
    pub truths: Vec<ScenarioTruth>,
    pub seed: u64,
    pub generator: String,
    pub version: u32,
    pub mc_size: usize,
    /// `(scenario, n, M)` cells whose failure rate reached the limit.
    pub invalid_cells: Vec<(ScenarioId, usize, f64)>,
    /// Replication outcomes per row, in row order then replication order;
    /// `None` marks a failed replication.
    #[serde(skip)]
    pub outcomes: Vec<Vec<Option<ReplicationOutcome>>>,
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs every `(scenario, n)` cell for `reps` replications; each replication
/// fits the pipeline once and learns a policy at every multiplier.
pub fn regret_experiment(config: &ExperimentConfig) -> Result<RegretReport> {
    if config.reps < 2 {
        return Err(Error::InvalidConfig(format!(
            "regret experiments need at least 2 replications, got {}",
            config.reps
        )));
    }
    if config.scenarios.is_empty() || config.sizes.is_empty() || config.multipliers.is_empty() {
        return Err(Error::InvalidConfig("scenarios, sizes and multipliers must be nonempty".into()));
    }
    if let Some(&n) = config.sizes.iter().find(|&&n| n == 0) {
        return Err(Error::InvalidConfig(format!("sample sizes must be positive, got {n}")));
    }
    let mut rows = Vec::new();
    let mut truths = Vec::new();
    let mut invalid_cells = Vec::new();
    let mut outcomes = Vec::new();
    for &scenario in &config.scenarios {
        let oracle = ValueOracle::new(&ScenarioSpec::new(scenario, 0), config.mc_size, oracle_seed(config.seed, scenario))?;
        let design = oracle.spec().design();
        let baseline = ThresholdPolicy::baseline(&design);
        let best = oracle.oracle_policy(config.oracle_grid, 0.0);
        let v_base = oracle.value(&baseline, 0.0);
        let v_best = oracle.value(&best, 0.0);
        truths.push(ScenarioTruth {
            scenario,
            baseline_value: v_base,
            oracle_value: v_best,
            oracle_cutoffs: best.cutoffs().to_vec(),
        });
        for &n in &config.sizes {
            let spec = ScenarioSpec::new(scenario, n);
            let per_rep: Vec<Vec<Option<ReplicationOutcome>>> = (0..config.reps)
                .into_par_iter()
                .map(|rep| {
                    let seed = replication_seed(config.seed, scenario, n, rep);
                    let data = generate(&spec, seed);
                    let learn = LearnConfig {
                        seed: mix_seed(seed),
                        ..config.learn.clone()
                    };
                    let pipeline = match FittedPipeline::fit(&data, &learn) {
                        Ok(p) => p,
                        Err(e) => {
                            log::warn!("scenario {scenario}, n={n}, rep {rep}: {e}");
                            return vec![None; config.multipliers.len()];
                        }
                    };
                    config
                        .multipliers
                        .iter()
                        .map(|&m| match pipeline.learn(m, learn.cost) {
                            Ok(l) => Some(ReplicationOutcome {
                                learned_value: oracle.value(&l.policy, 0.0),
                                learned_cutoffs: [l.policy.cutoff(GroupId(0)), l.policy.cutoff(GroupId(1))],
                            }),
                            Err(e) => {
                                log::warn!("scenario {scenario}, n={n}, rep {rep}, M={m}: {e}");
                                None
                            }
                        })
                        .collect()
                })
                .collect();
            for (mi, &m) in config.multipliers.iter().enumerate() {
                let cell: Vec<Option<ReplicationOutcome>> = per_rep.iter().map(|r| r[mi]).collect();
                let ok: Vec<f64> = cell.iter().flatten().map(|o| o.learned_value).collect();
                let failures = config.reps - ok.len();
                let to_base: Vec<f64> = ok.iter().map(|v| v_base - v).collect();
                let to_best: Vec<f64> = ok.iter().map(|v| v_best - v).collect();
                let (rb, rb_se) = mean_se(&to_base);
                let (ro, ro_se) = mean_se(&to_best);
                let invalid = failures as f64 >= MAX_FAILURE_RATE * config.reps as f64;
                if invalid {
                    invalid_cells.push((scenario, n, m));
                }
                rows.push(RegretRow {
                    scenario,
                    n,
                    multiplier: m,
                    regret_baseline_mean: rb,
                    regret_baseline_se: rb_se,
                    regret_oracle_mean: ro,
                    regret_oracle_se: ro_se,
                    reps: config.reps,
                    failures,
                    invalid,
                });
                outcomes.push(cell);
            }
        }
    }
    Ok(RegretReport {
        rows,
        truths,
        seed: config.seed,
        generator: GENERATOR_NAME.to_string(),
        version: REPORT_VERSION,
        mc_size: config.mc_size,
        invalid_cells,
        outcomes,
    })
}
