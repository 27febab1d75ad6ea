//! The `safe-rd` command-line front end.
//!
//! Subcommands `learn`, `sensitivity`, `simulate` and `validate` share a
//! TOML run configuration (see [`RunConfig`]); every flag overrides the
//! matching config key. Result files carry the hash of the resolved
//! configuration and inputs, and are written only after all computation has
//! succeeded, each through a temp file and rename.
//!
//! Exit codes: 0 success, 2 usage, 3 data validation, 4 estimation failure.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{load_dataset, Dataset, LoadOptions, StudyDesign, DEFAULT_MIN_PER_GROUP};
use crate::error::{Error, ErrorKind, Result};
use crate::idbounds::write_bounds_csv;
use crate::learner::{sensitivity_sweep, FittedPipeline, GridMode, LearnConfig, LearnedPolicy};
use crate::simlab::{regret_experiment, ExperimentConfig, RegretReport, ScenarioId, DEFAULT_MC_SIZE, DEFAULT_ORACLE_GRID};
use crate::smooth::Bandwidth;

pub const CONFIG_VERSION: u32 = 1;
const DEFAULT_BOUNDS_POINTS: usize = 101;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;
pub const EXIT_ESTIMATION: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "safe-rd", version, about = "Safe cutoff learning for multi-cutoff regression discontinuity designs")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Learn new cutoffs and write the policy, objective curves and bounds.
    Learn(DataArgs),
    /// Sweep smoothness multipliers and treatment costs.
    Sensitivity(DataArgs),
    /// Run Monte Carlo regret experiments on the synthetic scenarios.
    Simulate(SimArgs),
    /// Parse and check the input and design without estimating anything.
    Validate(DataArgs),
}

#[derive(Debug, Args, Default)]
pub struct CommonArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Cross-fitting folds.
    #[arg(long)]
    pub folds: Option<usize>,
    /// Candidate grid: `observed` or `uniform:N`.
    #[arg(long)]
    pub grid: Option<String>,
    /// Comma-separated smoothness multipliers M.
    #[arg(long, value_delimiter = ',')]
    pub multipliers: Option<Vec<f64>>,
    /// Comma-separated treatment costs C.
    #[arg(long, value_delimiter = ',')]
    pub costs: Option<Vec<f64>>,
    /// Floor for group propensities.
    #[arg(long)]
    pub clamp: Option<f64>,
    /// Fixed bandwidth for the outcome curves.
    #[arg(long)]
    pub bandwidth: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct DataArgs {
    /// CSV with columns x, g, w, y.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// TOML design listing each group's baseline cutoff.
    #[arg(long)]
    pub design: Option<PathBuf>,
    /// Minimum records per group.
    #[arg(long)]
    pub min_per_group: Option<usize>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args, Default)]
pub struct SimArgs {
    /// Comma-separated scenario ids (A, B).
    #[arg(long, value_delimiter = ',')]
    pub scenarios: Option<Vec<String>>,
    /// Comma-separated sample sizes.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    #[arg(long)]
    pub reps: Option<usize>,
    /// Monte Carlo draws for true policy values.
    #[arg(long)]
    pub mc_size: Option<usize>,
    #[command(flatten)]
    pub common: CommonArgs,
}

/// Bandwidth overrides; absent keys select the automatic rule.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandwidthSection {
    pub outcome: Option<f64>,
    pub difference: Option<f64>,
    pub boundary: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub scenarios: Option<Vec<String>>,
    pub sizes: Option<Vec<usize>>,
    pub reps: Option<usize>,
    pub mc_size: Option<usize>,
    pub oracle_grid: Option<usize>,
}

/// The run configuration document.
///
/// ```toml
/// version = 1
/// input = "data.csv"
/// design = "design.toml"
/// out = "results"
/// seed = 7
/// folds = 5
/// grid = "observed"        # or "uniform:200"
/// multipliers = [1.0]
/// costs = [0.0]
/// clamp = 0.01
/// min_per_group = 30
/// bounds_points = 101
///
/// [bandwidth]
/// outcome = 40.0           # omit for the automatic rule
///
/// [simulate]
/// scenarios = ["A", "B"]
/// sizes = [1000, 4000]
/// reps = 200
/// mc_size = 1000000
/// ```
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: Option<u32>,
    pub input: Option<PathBuf>,
    pub design: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub folds: Option<usize>,
    pub grid: Option<String>,
    pub multipliers: Option<Vec<f64>>,
    pub costs: Option<Vec<f64>>,
    pub clamp: Option<f64>,
    pub min_per_group: Option<usize>,
    pub bounds_points: Option<usize>,
    #[serde(default)]
    pub bandwidth: BandwidthSection,
    #[serde(default)]
    pub simulate: SimulateSection,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        match cfg.version {
            Some(CONFIG_VERSION) => Ok(cfg),
            Some(v) => Err(Error::InvalidConfig(format!(
                "config version {v} is not supported (expected {CONFIG_VERSION})"
            ))),
            None => Err(Error::InvalidConfig(format!(
                "config is missing `version = {CONFIG_VERSION}`"
            ))),
        }
    }

    fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => Self::from_toml_str(&read_text(p)?).map_err(|e| e.in_stage(format!("config {}", p.display()))),
        }
    }

    fn apply(&mut self, args: &CommonArgs) {
        fn over<T: Clone>(slot: &mut Option<T>, v: &Option<T>) {
            if v.is_some() {
                slot.clone_from(v);
            }
        }
        over(&mut self.out, &args.out);
        over(&mut self.seed, &args.seed);
        over(&mut self.folds, &args.folds);
        over(&mut self.grid, &args.grid);
        over(&mut self.multipliers, &args.multipliers);
        over(&mut self.costs, &args.costs);
        over(&mut self.clamp, &args.clamp);
        over(&mut self.bandwidth.outcome, &args.bandwidth);
    }
}

/// Parameters after merging the config document with flags, validated.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Resolved {
    pub learn: LearnConfig,
    pub multipliers: Vec<f64>,
    pub costs: Vec<f64>,
    pub min_per_group: usize,
    pub bounds_points: usize,
}

fn bandwidth(h: Option<f64>, what: &str) -> Result<Bandwidth> {
    match h {
        None => Ok(Bandwidth::Auto),
        Some(h) if h > 0.0 && h.is_finite() => Ok(Bandwidth::Fixed(h)),
        Some(h) => Err(Error::InvalidConfig(format!("{what} bandwidth must be positive, got {h}"))),
    }
}

fn validated_list(values: Option<Vec<f64>>, default: f64, what: &str) -> Result<Vec<f64>> {
    let values = values.unwrap_or_else(|| vec![default]);
    if values.is_empty() {
        return Err(Error::InvalidConfig(format!("{what} list is empty")));
    }
    if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::InvalidConfig(format!("{what} must be finite and nonnegative, got {v}")));
    }
    Ok(values)
}

fn resolve(cfg: &RunConfig) -> Result<Resolved> {
    let mut learn = LearnConfig::default();
    if let Some(k) = cfg.folds {
        if !(2..=100).contains(&k) {
            return Err(Error::InvalidConfig(format!("folds must be in 2..=100, got {k}")));
        }
        learn.folds = k;
    }
    learn.seed = cfg.seed.unwrap_or(0);
    if let Some(g) = &cfg.grid {
        learn.grid = g.parse::<GridMode>()?;
    }
    if let Some(eps) = cfg.clamp {
        if !(eps > 0.0 && eps < 0.5) {
            return Err(Error::InvalidConfig(format!("clamp must be in (0, 0.5), got {eps}")));
        }
        learn.nuisance.clamp = eps;
    }
    learn.nuisance.outcome.bandwidth = bandwidth(cfg.bandwidth.outcome, "outcome")?;
    learn.difference.curve.bandwidth = bandwidth(cfg.bandwidth.difference, "difference")?;
    learn.difference.boundary.bandwidth = bandwidth(cfg.bandwidth.boundary, "boundary")?;
    let multipliers = validated_list(cfg.multipliers.clone(), 1.0, "multipliers")?;
    let costs = validated_list(cfg.costs.clone(), 0.0, "costs")?;
    let bounds_points = cfg.bounds_points.unwrap_or(DEFAULT_BOUNDS_POINTS);
    if bounds_points < 2 {
        return Err(Error::InvalidConfig(format!("bounds_points must be at least 2, got {bounds_points}")));
    }
    Ok(Resolved {
        learn,
        multipliers,
        costs,
        min_per_group: cfg.min_per_group.unwrap_or(DEFAULT_MIN_PER_GROUP),
        bounds_points,
    })
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

/// Hex SHA-256 over the resolved parameters and the raw input documents.
fn config_hash(resolved: &impl Serialize, inputs: &[&[u8]]) -> Result<String> {
    let mut hasher = Sha256::new();
    hasher.update(serde_json::to_vec(resolved)?);
    for bytes in inputs {
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(bytes);
    }
    Ok(hex::encode(hasher.finalize()))
}

#[derive(Debug, Clone, Serialize)]
struct Provenance {
    version: u32,
    config_hash: String,
    seed: u64,
}

impl Provenance {
    fn csv_header(&self) -> String {
        format!("# config_hash={} seed={} version={}\n", self.config_hash, self.seed, self.version)
    }
}

/// Output files held in memory until the run has succeeded.
struct Outputs {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    fn new(dir: PathBuf) -> Self {
        Self { dir, files: Vec::new() }
    }

    fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    fn commit(self) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(&self.dir)?;
        let mut staged = Vec::with_capacity(self.files.len());
        for (name, bytes) in &self.files {
            let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
            tmp.write_all(bytes)?;
            tmp.as_file().sync_all()?;
            staged.push((tmp, self.dir.join(name)));
        }
        let mut written = Vec::with_capacity(staged.len());
        for (tmp, path) in staged {
            tmp.persist(&path).map_err(|e| Error::Io(e.error))?;
            written.push(path);
        }
        Ok(written)
    }
}

fn csv_bytes<T: Serialize>(prov: &Provenance, rows: &[T]) -> Result<Vec<u8>> {
    let mut buf = prov.csv_header().into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
    }
    Ok(buf)
}

fn json_bytes(value: &impl Serialize) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}

struct LoadedData {
    dataset: Dataset,
    raw_input: Vec<u8>,
    raw_design: Vec<u8>,
}

fn load_data(args: &DataArgs, cfg: &RunConfig, min_per_group: usize) -> Result<LoadedData> {
    let input = args
        .input
        .clone()
        .or_else(|| cfg.input.clone())
        .ok_or_else(|| Error::InvalidConfig("no input given; pass --input or set `input`".into()))?;
    let design_path = args
        .design
        .clone()
        .or_else(|| cfg.design.clone())
        .ok_or_else(|| Error::InvalidConfig("no design given; pass --design or set `design`".into()))?;
    let raw_design = read_text(&design_path)?;
    let design =
        StudyDesign::from_toml_str(&raw_design).map_err(|e| e.in_stage(format!("design {}", design_path.display())))?;
    let raw_input = fs::read(&input).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", input.display()))))?;
    let options = LoadOptions {
        min_per_group,
        ..LoadOptions::default()
    };
    let dataset =
        load_dataset(raw_input.as_slice(), &design, &options).map_err(|e| e.in_stage(format!("input {}", input.display())))?;
    Ok(LoadedData {
        dataset,
        raw_input,
        raw_design: raw_design.into_bytes(),
    })
}

fn prepare(args: &DataArgs) -> Result<(RunConfig, Resolved)> {
    let mut cfg = RunConfig::load(args.common.config.as_deref())?;
    cfg.apply(&args.common);
    if args.min_per_group.is_some() {
        cfg.min_per_group = args.min_per_group;
    }
    let resolved = resolve(&cfg)?;
    Ok((cfg, resolved))
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.out
        .clone()
        .ok_or_else(|| Error::InvalidConfig("no output directory; pass --out or set `out`".into()))
}

#[derive(Serialize)]
struct GroupResult<'a> {
    group: &'a str,
    baseline_cutoff: f64,
    learned_cutoff: f64,
    change: f64,
    objective_gain: f64,
}

#[derive(Serialize)]
struct PairResult<'a> {
    w: u8,
    g: &'a str,
    g_ref: &'a str,
    boundary_difference: f64,
    lambda_base: f64,
    lambda_effective: f64,
}

#[derive(Serialize)]
struct PolicyDocument<'a> {
    #[serde(flatten)]
    provenance: &'a Provenance,
    n: usize,
    multiplier: f64,
    cost: f64,
    groups: Vec<GroupResult<'a>>,
    objective: crate::estimator::ValueBreakdown,
    baseline_objective: crate::estimator::ValueBreakdown,
    pairs: Vec<PairResult<'a>>,
    gap_diagnostic: f64,
    config: &'a Resolved,
}

#[derive(Serialize)]
struct CurveRow<'a> {
    group: &'a str,
    candidate: f64,
    objective: f64,
}

fn policy_document<'a>(
    prov: &'a Provenance,
    pipeline: &'a FittedPipeline,
    learned: &'a LearnedPolicy,
    resolved: &'a Resolved,
) -> PolicyDocument<'a> {
    let design = pipeline.design();
    let groups = learned
        .tables
        .iter()
        .map(|t| GroupResult {
            group: design.label(t.group),
            baseline_cutoff: t.baseline_cutoff,
            learned_cutoff: t.learned_cutoff,
            change: t.learned_cutoff - t.baseline_cutoff,
            objective_gain: t.gain(),
        })
        .collect();
    let curves = pipeline.curves();
    let pairs = learned
        .lambda
        .iter()
        .map(|(k, &eff)| PairResult {
            w: k.w,
            g: design.label(k.g),
            g_ref: design.label(k.g_ref),
            boundary_difference: curves.boundary[k],
            lambda_base: curves.lambda[k],
            lambda_effective: eff,
        })
        .collect();
    PolicyDocument {
        provenance: prov,
        n: pipeline.dataset().len(),
        multiplier: learned.multiplier,
        cost: learned.cost,
        groups,
        objective: learned.breakdown,
        baseline_objective: learned.baseline_breakdown,
        pairs,
        gap_diagnostic: learned.gap_diagnostic,
        config: resolved,
    }
}

fn cmd_learn(args: &DataArgs) -> Result<Vec<PathBuf>> {
    let (cfg, resolved) = prepare(args)?;
    if resolved.multipliers.len() != 1 || resolved.costs.len() != 1 {
        return Err(Error::InvalidConfig(
            "learn takes a single multiplier and cost; use `sensitivity` for lists".into(),
        ));
    }
    let out = out_dir(&cfg)?;
    let data = load_data(args, &cfg, resolved.min_per_group)?;
    let prov = Provenance {
        version: CONFIG_VERSION,
        config_hash: config_hash(&resolved, &[&data.raw_input, &data.raw_design])?,
        seed: resolved.learn.seed,
    };
    let pipeline = FittedPipeline::fit(&data.dataset, &resolved.learn)?;
    let (m, c) = (resolved.multipliers[0], resolved.costs[0]);
    let learned = pipeline.learn(m, c)?;
    let design = pipeline.design();

    let mut outputs = Outputs::new(out);
    outputs.add("policy.json", json_bytes(&policy_document(&prov, &pipeline, &learned, &resolved))?);
    let curve_rows: Vec<CurveRow> = learned
        .tables
        .iter()
        .flat_map(|t| {
            t.candidates.iter().zip(&t.objective).map(|(&candidate, &objective)| CurveRow {
                group: design.label(t.group),
                candidate,
                objective,
            })
        })
        .collect();
    outputs.add("objective_curves.csv", csv_bytes(&prov, &curve_rows)?);
    let (lo, hi) = (design.lowest_cutoff(), design.highest_cutoff());
    let k = resolved.bounds_points;
    let xs: Vec<f64> = (0..k)
        .map(|i| if i + 1 == k { hi } else { lo + (hi - lo) * i as f64 / (k - 1) as f64 })
        .collect();
    let mut bounds = prov.csv_header().into_bytes();
    write_bounds_csv(&mut bounds, design, &pipeline.bounds(m)?, &xs)?;
    outputs.add("bounds.csv", bounds);
    println!(
        "learned cutoffs {:?}; worst-case objective {:.6} (baseline {:.6})",
        learned.policy.cutoffs(),
        learned.breakdown.total,
        learned.baseline_breakdown.total
    );
    outputs.commit()
}

fn cmd_sensitivity(args: &DataArgs) -> Result<Vec<PathBuf>> {
    let (cfg, resolved) = prepare(args)?;
    let out = out_dir(&cfg)?;
    let data = load_data(args, &cfg, resolved.min_per_group)?;
    let prov = Provenance {
        version: CONFIG_VERSION,
        config_hash: config_hash(&resolved, &[&data.raw_input, &data.raw_design])?,
        seed: resolved.learn.seed,
    };
    let pipeline = FittedPipeline::fit(&data.dataset, &resolved.learn)?;
    let rows = sensitivity_sweep(&pipeline, &resolved.multipliers, &resolved.costs)?;
    let mut outputs = Outputs::new(out);
    outputs.add("sensitivity.csv", csv_bytes(&prov, &rows)?);
    println!("{} sweep rows", rows.len());
    outputs.commit()
}

#[derive(Serialize)]
struct RegretMeta<'a> {
    #[serde(flatten)]
    provenance: &'a Provenance,
    generator: &'a str,
    mc_size: usize,
    reps: usize,
    truths: &'a [crate::simlab::ScenarioTruth],
    invalid_cells: &'a [(ScenarioId, usize, f64)],
    config: &'a ExperimentConfig,
}

fn cmd_simulate(args: &SimArgs) -> Result<Vec<PathBuf>> {
    let mut cfg = RunConfig::load(args.common.config.as_deref())?;
    cfg.apply(&args.common);
    let sim = &cfg.simulate;
    let resolved = resolve(&cfg)?;
    let scenarios = args
        .scenarios
        .clone()
        .or_else(|| sim.scenarios.clone())
        .unwrap_or_else(|| vec!["A".into(), "B".into()])
        .iter()
        .map(|s| s.parse::<ScenarioId>())
        .collect::<Result<Vec<_>>>()?;
    let defaults = ExperimentConfig::default();
    let experiment = ExperimentConfig {
        scenarios,
        sizes: args.sizes.clone().or_else(|| sim.sizes.clone()).unwrap_or(defaults.sizes),
        multipliers: resolved.multipliers.clone(),
        reps: args.reps.or(sim.reps).unwrap_or(defaults.reps),
        seed: resolved.learn.seed,
        mc_size: args.mc_size.or(sim.mc_size).unwrap_or(DEFAULT_MC_SIZE),
        oracle_grid: sim.oracle_grid.unwrap_or(DEFAULT_ORACLE_GRID),
        learn: resolved.learn.clone(),
    };
    if experiment.reps < 2 {
        return Err(Error::InvalidConfig(format!(
            "reps must be at least 2 for standard errors, got {}",
            experiment.reps
        )));
    }
    let out = out_dir(&cfg)?;
    let prov = Provenance {
        version: CONFIG_VERSION,
        config_hash: config_hash(&experiment, &[])?,
        seed: experiment.seed,
    };
    let report: RegretReport = regret_experiment(&experiment)?;
    let meta = RegretMeta {
        provenance: &prov,
        generator: &report.generator,
        mc_size: report.mc_size,
        reps: experiment.reps,
        truths: &report.truths,
        invalid_cells: &report.invalid_cells,
        config: &experiment,
    };
    let mut outputs = Outputs::new(out);
    outputs.add("regret.csv", csv_bytes(&prov, &report.rows)?);
    outputs.add("regret_meta.json", json_bytes(&meta)?);
    println!("{} regret rows", report.rows.len());
    outputs.commit()
}

fn cmd_validate(args: &DataArgs) -> Result<()> {
    let (cfg, resolved) = prepare(args)?;
    let data = load_data(args, &cfg, resolved.min_per_group)?;
    let d = &data.dataset;
    println!("ok: {} records, {} groups", d.len(), d.design().num_groups());
    for g in d.design().groups() {
        println!(
            "  group {:<12} cutoff {:>12} records {}",
            d.design().label(g),
            d.design().cutoff(g),
            d.group_count(g)
        );
    }
    Ok(())
}

pub fn exit_code(err: &Error) -> i32 {
    match err.kind() {
        ErrorKind::Usage => EXIT_USAGE,
        ErrorKind::Validation | ErrorKind::Io => EXIT_VALIDATION,
        ErrorKind::Estimation => EXIT_ESTIMATION,
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: --threads must be positive");
            return EXIT_USAGE;
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            log::debug!("thread pool already configured: {e}");
        }
    }
    let result = match &cli.command {
        Command::Learn(a) => cmd_learn(a).map(report_written),
        Command::Sensitivity(a) => cmd_sensitivity(a).map(report_written),
        Command::Simulate(a) => cmd_simulate(a).map(report_written),
        Command::Validate(a) => cmd_validate(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            exit_code(&e)
        }
    }
}

fn report_written(paths: Vec<PathBuf>) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}
