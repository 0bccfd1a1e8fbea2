//! Command-line parsing, config-file merging and validation.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use flmm::basis::{self, roughness_registry, Interval};
use flmm::em::EmConfig;
use flmm::fpca::{rule_registry, FpcaConfig, FpcaScope};
use flmm::inference::covariance_registry;
use flmm::model::ModelSpec;
use flmm::quadrature;
use flmm::selection::selector_registry;
use flmm::sim::{Case, Denoise, Scenario, StudyConfig};

use crate::error::CliError;

pub const DEFAULT_SEED: u64 = 1;

#[derive(Parser, Debug)]
#[command(name = "flmm", version, about = "Functional linear mixed-effects models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Commands,
}

#[derive(Subcommand, Debug)]
pub enum Commands {
    /// Fit the model to curves and responses read from CSV.
    Fit(FitArgs),
    /// Evaluate GCV over a smoothing-parameter grid.
    GcvScan(FitArgs),
    /// Run a simulation study.
    Simulate(SimulateArgs),
    /// Decompose curves into principal components and reconstruct them.
    Fpca(FpcaArgs),
}

#[derive(Args, Debug, Clone, Default)]
pub struct CommonArgs {
    /// Flat `key = value` file; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker thread cap.
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct ModelArgs {
    /// Basis for both slopes, e.g. `bspline:4:31` or `fourier:35:365`.
    #[arg(long)]
    pub basis: Option<String>,
    /// Basis for the random slopes when it differs.
    #[arg(long)]
    pub b_basis: Option<String>,
    /// Roughness operator for both slopes: `d2`, `deriv:<m>`, `harmonic[:<omega>]`.
    #[arg(long)]
    pub penalty: Option<String>,
    #[arg(long)]
    pub b_penalty: Option<String>,
    /// Design quadrature: `trapezoid[:<panels>]` or `gauss:<nodes>`.
    #[arg(long)]
    pub quadrature: Option<String>,
    #[arg(long)]
    pub penalty_quadrature: Option<String>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct LambdaArgs {
    /// Choose the smoothing parameters by GCV.
    #[arg(long, conflicts_with_all = ["lambda_beta", "lambda_b"])]
    pub gcv: bool,
    #[arg(long)]
    pub lambda_beta: Option<f64>,
    #[arg(long)]
    pub lambda_b: Option<f64>,
    /// GCV grid in log10: `lo_beta:hi_beta:n_beta:lo_b:hi_b:n_b`.
    #[arg(long)]
    pub grid: Option<String>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct FpcaOptions {
    /// Working-grid size.
    #[arg(long)]
    pub fpca_grid: Option<usize>,
    #[arg(long)]
    pub mean_bandwidth: Option<f64>,
    #[arg(long)]
    pub cov_bandwidth: Option<f64>,
    /// `pve:<threshold>` or `fixed:<count>`.
    #[arg(long)]
    pub fpc_rule: Option<String>,
    /// `pooled` or `per-subject`.
    #[arg(long)]
    pub scope: Option<String>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Curves CSV: `subject_id,visit_id,t,x`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Responses CSV: `subject_id,visit_id,y`.
    #[arg(long)]
    pub response: Option<PathBuf>,
    /// Domain `lo:hi`; defaults to the range of observed times.
    #[arg(long)]
    pub domain: Option<String>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub lambda: LambdaArgs,
    /// `simplified` or `sandwich`.
    #[arg(long)]
    pub cov_form: Option<String>,
    #[arg(long)]
    pub level: Option<f64>,
    /// Points of the output evaluation grid.
    #[arg(long)]
    pub eval_points: Option<usize>,
    /// Replace curves by their FPCA reconstruction before fitting.
    #[arg(long)]
    pub denoise: bool,
    #[command(flatten)]
    pub fpca: FpcaOptions,
}

#[derive(Args, Debug, Clone, Default)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// `poly` or `fourier`.
    #[arg(long)]
    pub case: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub sigma_e: Option<f64>,
    #[arg(long)]
    pub sigma_eps: Option<f64>,
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Observation points per simulated curve.
    #[arg(long)]
    pub curve_points: Option<usize>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub lambda: LambdaArgs,
    /// `auto`, `never` or `always`.
    #[arg(long)]
    pub denoise: Option<String>,
    #[arg(long)]
    pub level: Option<f64>,
    #[arg(long)]
    pub eval_points: Option<usize>,
    #[command(flatten)]
    pub fpca: FpcaOptions,
}

#[derive(Args, Debug, Clone, Default)]
pub struct FpcaArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Curves CSV: `subject_id,visit_id,t,x`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub domain: Option<String>,
    #[command(flatten)]
    pub fpca: FpcaOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    Fit,
    GcvScan,
    Simulate,
    Fpca,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DataInput {
    pub curves: PathBuf,
    pub responses: Option<PathBuf>,
    pub domain: Option<Interval>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitTask {
    pub input: DataInput,
    pub model: ModelSpec,
    pub selector: String,
    pub cov_form: String,
    pub level: f64,
    pub eval_points: usize,
    pub denoise: bool,
    pub fpca: FpcaConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulateTask {
    pub scenario: Scenario,
    pub replicates: usize,
    pub study: StudyConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FpcaTask {
    pub input: DataInput,
    pub fpca: FpcaConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Fit(FitTask),
    GcvScan(FitTask),
    Simulate(SimulateTask),
    Fpca(FpcaTask),
}

/// A fully resolved and validated run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: CommandKind,
    pub out_dir: PathBuf,
    pub threads: Option<usize>,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
    pub task: Task,
}

impl RunConfig {
    pub fn em(&self) -> EmConfig {
        EmConfig {
            max_iter: self.max_iter,
            tol: self.tol,
            init: None,
        }
    }
}

/// Parsed `key = value` pairs with their line numbers.
#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    pub path: PathBuf,
    pub entries: BTreeMap<String, (usize, String)>,
}

impl ConfigFile {
    pub fn parse(path: &Path, text: &str) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let Some((key, value)) = body.split_once('=') else {
                return Err(CliError::usage(format!("{}:{line}: expected `key = value`", path.display())));
            };
            let key = key.trim().replace('_', "-");
            if key.is_empty() {
                return Err(CliError::usage(format!("{}:{line}: empty key", path.display())));
            }
            if let Some((first, _)) = entries.insert(key.clone(), (line, value.trim().to_string())) {
                return Err(CliError::usage(format!(
                    "{}:{line}: key `{key}` already set on line {first}",
                    path.display()
                )));
            }
        }
        Ok(Self {
            path: path.to_path_buf(),
            entries,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        Self::parse(path, &text)
    }
}

/// Command-line values falling back to config-file values.
struct Layer<'a> {
    file: &'a ConfigFile,
    used: RefCell<BTreeSet<String>>,
}

impl<'a> Layer<'a> {
    fn new(file: &'a ConfigFile) -> Self {
        Self {
            file,
            used: RefCell::new(BTreeSet::new()),
        }
    }

    fn from_file<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        self.used.borrow_mut().insert(key.to_string());
        match self.file.entries.get(key) {
            None => Ok(None),
            Some((line, v)) => v.parse().map(Some).map_err(|e| {
                CliError::usage(format!("{}:{line}: bad value `{v}` for `{key}`: {e}", self.file.path.display()))
            }),
        }
    }

    fn get<T: FromStr>(&self, cli: Option<T>, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        let file = self.from_file(key)?;
        Ok(cli.or(file))
    }

    fn flag(&self, cli: bool, key: &str) -> Result<bool, CliError> {
        Ok(cli || self.from_file::<bool>(key)?.unwrap_or(false))
    }

    fn finish(&self) -> Result<(), CliError> {
        let used = self.used.borrow();
        for (key, (line, _)) in &self.file.entries {
            if !used.contains(key) {
                return Err(CliError::usage(format!(
                    "{}:{line}: unknown key `{key}` for this command",
                    self.file.path.display()
                )));
            }
        }
        Ok(())
    }
}

fn usage_from<E: Display>(what: &str) -> impl Fn(E) -> CliError + '_ {
    move |e| CliError::usage(format!("invalid {what}: {e}"))
}

fn parse_domain(s: &str) -> Result<Interval, CliError> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| CliError::usage(format!("domain `{s}` must be `lo:hi`")))?;
    let lo: f64 = lo.trim().parse().map_err(usage_from("domain"))?;
    let hi: f64 = hi.trim().parse().map_err(usage_from("domain"))?;
    Interval::new(lo, hi).map_err(usage_from("domain"))
}

fn resolve_model(l: &Layer, a: &ModelArgs, base: ModelSpec) -> Result<ModelSpec, CliError> {
    let basis = l.get(a.basis.clone(), "basis")?;
    let penalty = l.get(a.penalty.clone(), "penalty")?;
    let b_basis = l.get(a.b_basis.clone(), "b-basis")?;
    let b_penalty = l.get(a.b_penalty.clone(), "b-penalty")?;
    let mut m = base;
    if let Some(b) = basis {
        m.beta_basis = b.clone();
        m.b_basis = b;
    }
    if let Some(p) = penalty {
        m.beta_penalty = p.clone();
        m.b_penalty = p;
    }
    if let Some(b) = b_basis {
        m.b_basis = b;
    }
    if let Some(p) = b_penalty {
        m.b_penalty = p;
    }
    if let Some(q) = l.get(a.quadrature.clone(), "quadrature")? {
        m.quadrature = q;
    }
    if let Some(q) = l.get(a.penalty_quadrature.clone(), "penalty-quadrature")? {
        m.penalty_quadrature = q;
    }
    Ok(m)
}

/// Checks every spec string against its registry without building
/// penalty matrices.
fn validate_model(m: &ModelSpec, domain: Interval) -> Result<(), CliError> {
    for b in [&m.beta_basis, &m.b_basis] {
        basis::from_spec(b, domain).map_err(usage_from("basis"))?;
    }
    for p in [&m.beta_penalty, &m.b_penalty] {
        roughness_registry().build(p, &domain).map_err(usage_from("penalty"))?;
    }
    for q in [&m.quadrature, &m.penalty_quadrature] {
        quadrature::registry().build(q, &()).map_err(usage_from("quadrature"))?;
    }
    Ok(())
}

/// Selector spec from `--gcv`/`--grid` or both lambdas. Command-line
/// choices replace config-file choices as a whole.
fn resolve_selector(l: &Layer, a: &LambdaArgs, default: Option<&str>) -> Result<String, CliError> {
    let file_gcv = l.from_file::<bool>("gcv")?.unwrap_or(false);
    let file_lb: Option<f64> = l.from_file("lambda-beta")?;
    let file_lbb: Option<f64> = l.from_file("lambda-b")?;
    let grid = l.get(a.grid.clone(), "grid")?;
    let cli_chose = a.gcv || a.lambda_beta.is_some() || a.lambda_b.is_some();
    let (gcv, lb, lbb) = if cli_chose {
        (a.gcv, a.lambda_beta, a.lambda_b)
    } else {
        (file_gcv, file_lb, file_lbb)
    };
    if gcv && (lb.is_some() || lbb.is_some()) {
        return Err(CliError::usage("--gcv cannot be combined with --lambda-beta or --lambda-b"));
    }
    let spec = match (lb, lbb) {
        (Some(b), Some(c)) => {
            if grid.is_some() {
                return Err(CliError::usage("--grid applies only to GCV selection"));
            }
            format!("fixed:{b}:{c}")
        }
        (Some(_), None) | (None, Some(_)) => {
            return Err(CliError::usage("fixed smoothing needs both --lambda-beta and --lambda-b"));
        }
        (None, None) => match (&grid, gcv, default) {
            (Some(g), _, _) => format!("gcv:{g}"),
            (None, true, _) | (None, false, None) => "gcv".to_string(),
            (None, false, Some(d)) => d.to_string(),
        },
    };
    selector_registry().build(&spec, &()).map_err(usage_from("smoothing parameters"))?;
    Ok(spec)
}

fn resolve_fpca(l: &Layer, a: &FpcaOptions) -> Result<FpcaConfig, CliError> {
    let mut c = FpcaConfig::default();
    if let Some(n) = l.get(a.fpca_grid, "fpca-grid")? {
        c.n_grid = n;
    }
    c.mean_bandwidth = l.get(a.mean_bandwidth, "mean-bandwidth")?;
    c.cov_bandwidth = l.get(a.cov_bandwidth, "cov-bandwidth")?;
    if let Some(r) = l.get(a.fpc_rule.clone(), "fpc-rule")? {
        c.rule = r;
    }
    if let Some(s) = l.get(a.scope.clone(), "scope")? {
        c.scope = s.parse::<FpcaScope>().map_err(usage_from("scope"))?;
    }
    if c.n_grid < 2 {
        return Err(CliError::usage("--fpca-grid must be at least 2"));
    }
    for h in [c.mean_bandwidth, c.cov_bandwidth].into_iter().flatten() {
        if !(h > 0.0 && h.is_finite()) {
            return Err(CliError::usage(format!("bandwidths must be positive, got {h}")));
        }
    }
    rule_registry().build(&c.rule, &()).map_err(usage_from("FPC rule"))?;
    Ok(c)
}

fn check_level(level: f64) -> Result<f64, CliError> {
    if level > 0.0 && level < 1.0 {
        Ok(level)
    } else {
        Err(CliError::usage(format!("--level must lie in (0, 1), got {level}")))
    }
}

fn check_eval_points(n: usize) -> Result<usize, CliError> {
    if n >= 2 {
        Ok(n)
    } else {
        Err(CliError::usage("--eval-points must be at least 2"))
    }
}

fn require<T>(v: Option<T>, flag: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::usage(format!("missing required {flag}")))
}

fn existing(p: PathBuf, flag: &str) -> Result<PathBuf, CliError> {
    if p.is_file() {
        Ok(p)
    } else {
        Err(CliError::usage(format!("{flag} {}: no such file", p.display())))
    }
}

fn resolve_fit(l: &Layer, a: &FitArgs, scan: bool) -> Result<FitTask, CliError> {
    let curves = existing(require(l.get(a.data.clone(), "data")?, "--data")?, "--data")?;
    let responses = existing(require(l.get(a.response.clone(), "response")?, "--response")?, "--response")?;
    let domain = l.get(a.domain.clone(), "domain")?.map(|d| parse_domain(&d)).transpose()?;
    let model = resolve_model(l, &a.model, ModelSpec::default())?;
    validate_model(&model, domain.unwrap_or(Interval::new(0.0, 1.0).expect("unit interval")))?;
    let selector = resolve_selector(l, &a.lambda, None)?;
    if scan && !selector.starts_with("gcv") {
        return Err(CliError::usage("gcv-scan does not take fixed smoothing parameters"));
    }
    let cov_form = l.get(a.cov_form.clone(), "cov-form")?.unwrap_or_else(|| "simplified".into());
    covariance_registry().build(&cov_form, &()).map_err(usage_from("covariance form"))?;
    Ok(FitTask {
        input: DataInput {
            curves,
            responses: Some(responses),
            domain,
        },
        model,
        selector,
        cov_form,
        level: check_level(l.get(a.level, "level")?.unwrap_or(0.95))?,
        eval_points: check_eval_points(l.get(a.eval_points, "eval-points")?.unwrap_or(101))?,
        denoise: l.flag(a.denoise, "denoise")?,
        fpca: resolve_fpca(l, &a.fpca)?,
    })
}

fn resolve_simulate(l: &Layer, a: &SimulateArgs, seed: u64, em: &EmConfig) -> Result<SimulateTask, CliError> {
    let case: Case = require(l.get(a.case.clone(), "case")?, "--case")?
        .parse()
        .map_err(usage_from("case"))?;
    let mut scenario = Scenario::new(
        case,
        require(l.get(a.n, "n")?, "--n")?,
        require(l.get(a.m, "m")?, "--m")?,
        l.get(a.sigma_e, "sigma-e")?.unwrap_or(0.0),
        require(l.get(a.sigma_eps, "sigma-eps")?, "--sigma-eps")?,
        seed,
    );
    if let Some(p) = l.get(a.curve_points, "curve-points")? {
        scenario.n_grid = p;
    }
    scenario.validate().map_err(usage_from("scenario"))?;
    let replicates = l.get(a.replicates, "replicates")?.unwrap_or(100);
    if replicates == 0 {
        return Err(CliError::usage("--replicates must be at least 1"));
    }
    let mut study = StudyConfig::for_case(case);
    study.model = resolve_model(l, &a.model, study.model.clone())?;
    validate_model(&study.model, Interval::new(0.0, 1.0).expect("unit interval"))?;
    study.selector = resolve_selector(l, &a.lambda, Some(&study.selector))?;
    if let Some(d) = l.get(a.denoise.clone(), "denoise")? {
        study.denoise = d.parse::<Denoise>().map_err(usage_from("denoise mode"))?;
    }
    study.fpca = resolve_fpca(l, &a.fpca)?;
    if let Some(v) = l.get(a.level, "level")? {
        study.level = check_level(v)?;
    }
    if let Some(v) = l.get(a.eval_points, "eval-points")? {
        study.eval_points = check_eval_points(v)?;
    }
    study.max_iter = em.max_iter;
    study.tol = em.tol;
    Ok(SimulateTask {
        scenario,
        replicates,
        study,
    })
}

fn resolve_fpca_task(l: &Layer, a: &FpcaArgs) -> Result<FpcaTask, CliError> {
    let curves = existing(require(l.get(a.data.clone(), "data")?, "--data")?, "--data")?;
    let domain = l.get(a.domain.clone(), "domain")?.map(|d| parse_domain(&d)).transpose()?;
    Ok(FpcaTask {
        input: DataInput {
            curves,
            responses: None,
            domain,
        },
        fpca: resolve_fpca(l, &a.fpca)?,
    })
}

/// Parses `argv` (program name first), merges the optional config file and
/// validates everything that can be checked before reading data.
///
/// `env_seed` is consulted only when `--seed` is absent; it takes
/// precedence over a `seed` key in the config file.
pub fn parse_and_validate<I, T>(argv: I, env_seed: Option<&str>) -> Result<RunConfig, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(CliError::Clap)?;
    let common = match &cli.command {
        Commands::Fit(a) | Commands::GcvScan(a) => a.common.clone(),
        Commands::Simulate(a) => a.common.clone(),
        Commands::Fpca(a) => a.common.clone(),
    };
    let file = match &common.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let l = Layer::new(&file);
    let env_seed = match (common.seed, env_seed) {
        (None, Some(s)) => Some(
            s.trim()
                .parse::<u64>()
                .map_err(|e| CliError::usage(format!("FLMM_SEED `{s}` is not a seed: {e}")))?,
        ),
        _ => None,
    };
    let seed = l.get(common.seed.or(env_seed), "seed")?.unwrap_or(DEFAULT_SEED);
    let out_dir = l.get(common.out.clone(), "out")?.unwrap_or_else(|| PathBuf::from("."));
    let threads = l.get(common.threads, "threads")?;
    if threads == Some(0) {
        return Err(CliError::usage("--threads must be at least 1"));
    }
    let defaults = EmConfig::default();
    let max_iter = l.get(common.max_iter, "max-iter")?.unwrap_or(defaults.max_iter);
    let tol = l.get(common.tol, "tol")?.unwrap_or(defaults.tol);
    if max_iter == 0 {
        return Err(CliError::usage("--max-iter must be at least 1"));
    }
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(CliError::usage(format!("--tol must be positive, got {tol}")));
    }
    let em = EmConfig {
        max_iter,
        tol,
        init: None,
    };
    let (command, task) = match &cli.command {
        Commands::Fit(a) => (CommandKind::Fit, Task::Fit(resolve_fit(&l, a, false)?)),
        Commands::GcvScan(a) => (CommandKind::GcvScan, Task::GcvScan(resolve_fit(&l, a, true)?)),
        Commands::Simulate(a) => (CommandKind::Simulate, Task::Simulate(resolve_simulate(&l, a, seed, &em)?)),
        Commands::Fpca(a) => (CommandKind::Fpca, Task::Fpca(resolve_fpca_task(&l, a)?)),
    };
    l.finish()?;
    Ok(RunConfig {
        command,
        out_dir,
        threads,
        seed,
        max_iter,
        tol,
        task,
    })
}
