//! Monte Carlo engine: the two-case data generator, RMISE metrics and
//! replicate studies with per-scenario summaries.
//!
//! Every random draw comes from a ChaCha8 stream keyed by
//! `(seed, replicate, subject, visit)` with the purpose of the draw as the
//! stream id. Smaller designs are therefore prefixes of larger ones and
//! noise levels share their underlying standard-normal draws.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::Interval;
use crate::design::{Dataset, FunctionalSample, Subject, Visit};
use crate::em::{coefficients_to_functions, EmConfig, FitResult};
use crate::error::{invalid, FlmmError, Result};
use crate::fpca::{denoise_dataset, FpcaConfig};
use crate::inference::{beta_band, gamma_surface, intercept_ci};
use crate::linalg::{compensated_sum, max_abs_asymmetry, min_eigenvalue};
use crate::model::{Model, ModelSpec};
use crate::quadrature::{trapezoid, trapezoid_weights};
use crate::selection::{selector_registry, GcvSurface};

pub const RNG_ALGORITHM: &str =
    "ChaCha8Rng (rand_chacha 0.9), key (seed, replicate, subject, visit) as little-endian u64 words, stream = draw purpose";
pub const REPORT_SCHEMA_VERSION: u32 = 1;
/// Points of the trapezoid rule used for `∫β_i X_ij` in the generator.
pub const ORACLE_POINTS: usize = 2001;
pub const ALPHA_MEAN: f64 = 3.0;
pub const ALPHA_VAR: f64 = 0.25;
pub const ETA_MEAN: [f64; 3] = [1.0, 2.0, 1.0];
pub const ETA_SD: [f64; 3] = [0.2, 0.4, 0.2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Case {
    Poly,
    Fourier,
}

impl std::str::FromStr for Case {
    type Err = FlmmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "poly" => Ok(Self::Poly),
            "fourier" => Ok(Self::Fourier),
            _ => invalid(format!("unknown case `{s}` (known: poly, fourier)")),
        }
    }
}

impl Case {
    /// The three functions weighted by `η_0, η_1, η_2`.
    pub fn components(self, t: f64) -> [f64; 3] {
        match self {
            Case::Poly => [1.0, t * t, (-3.0 * t).exp()],
            Case::Fourier => [1.0, (2.0 * PI * t).sin(), (2.0 * PI * t).cos()],
        }
    }

    pub fn slope(self, eta: &[f64; 3], t: f64) -> f64 {
        let c = self.components(t);
        eta[0] * c[0] + eta[1] * c[1] + eta[2] * c[2]
    }

    /// `β(t)` at the mean coefficients `(1, 2, 1)`.
    pub fn population_slope(self, t: f64) -> f64 {
        self.slope(&ETA_MEAN, t)
    }

    pub fn name(self) -> &'static str {
        match self {
            Case::Poly => "poly",
            Case::Fourier => "fourier",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub case: Case,
    pub n: usize,
    pub m: usize,
    pub sigma_e: f64,
    pub sigma_eps: f64,
    /// Equispaced observation points per curve.
    pub n_grid: usize,
    pub seed: u64,
}

impl Scenario {
    pub fn new(case: Case, n: usize, m: usize, sigma_e: f64, sigma_eps: f64, seed: u64) -> Self {
        Self {
            case,
            n,
            m,
            sigma_e,
            sigma_eps,
            n_grid: 101,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 {
            return invalid("scenario needs at least one subject and one visit");
        }
        if self.n_grid < 2 {
            return invalid("curves need at least two observation points");
        }
        for (name, v) in [("sigma_e", self.sigma_e), ("sigma_eps", self.sigma_eps)] {
            if !(v >= 0.0 && v.is_finite()) {
                return invalid(format!("{name} must be finite and nonnegative, got {v}"));
            }
        }
        Ok(())
    }

    /// Whether the settings belong to the published factorial design.
    pub fn in_published_design(&self) -> bool {
        [50, 100].contains(&self.n)
            && [5, 10, 20].contains(&self.m)
            && [0.0, 0.5].contains(&self.sigma_e)
            && [0.5, 1.0].contains(&self.sigma_eps)
    }
}

#[derive(Debug, Clone, Copy)]
#[repr(u64)]
enum Purpose {
    SubjectLevel = 1,
    Scores = 2,
    ResponseNoise = 3,
    CurveNoise = 4,
}

const SUBJECT_SLOT: u64 = u64::MAX;

fn stream(seed: u64, replicate: u64, subject: u64, visit: u64, purpose: Purpose) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    for (k, word) in [seed, replicate, subject, visit].iter().enumerate() {
        key[8 * k..8 * k + 8].copy_from_slice(&word.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(purpose as u64);
    rng
}

/// Generating values for one subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectTruth {
    pub alpha: f64,
    pub eta: [f64; 3],
    pub delta: [f64; 2],
    /// `ξ_ijk`, one row per visit.
    pub scores: Vec<[f64; 4]>,
}

/// The simulated dataset with everything needed to score a fit.
#[derive(Debug, Clone)]
pub struct Simulated {
    pub scenario: Scenario,
    pub dataset: Dataset,
    pub truth: Vec<SubjectTruth>,
}

/// `ψ_1..ψ_4 = sin 2πt, cos 2πt, sin 4πt, cos 4πt`.
pub fn psi(t: f64) -> [f64; 4] {
    [
        (2.0 * PI * t).sin(),
        (2.0 * PI * t).cos(),
        (4.0 * PI * t).sin(),
        (4.0 * PI * t).cos(),
    ]
}

/// `X_ij(t) = δ_0 + δ_1 sin πt + √2 Σ ξ_k ψ_k(t)`.
pub fn true_curve(delta: &[f64; 2], scores: &[f64; 4], t: f64) -> f64 {
    let p = psi(t);
    let osc: f64 = scores.iter().zip(p).map(|(s, f)| s * f).sum();
    delta[0] + delta[1] * (PI * t).sin() + 2f64.sqrt() * osc
}

impl Simulated {
    pub fn beta_i(&self, i: usize, t: f64) -> f64 {
        self.scenario.case.slope(&self.truth[i].eta, t)
    }

    pub fn true_x(&self, i: usize, j: usize, t: f64) -> f64 {
        true_curve(&self.truth[i].delta, &self.truth[i].scores[j], t)
    }
}

pub fn generate(scn: &Scenario) -> Result<Simulated> {
    generate_replicate(scn, 0)
}

pub fn generate_replicate(scn: &Scenario, replicate: u64) -> Result<Simulated> {
    scn.validate()?;
    let domain = Interval::new(0.0, 1.0)?;
    let grid = domain.grid(scn.n_grid);
    let oracle = domain.grid(ORACLE_POINTS);
    let oracle_w = trapezoid_weights(&oracle);
    let comps: Vec<[f64; 3]> = oracle.iter().map(|&t| scn.case.components(t)).collect();
    let psis: Vec<[f64; 4]> = oracle.iter().map(|&t| psi(t)).collect();
    let sin_pi: Vec<f64> = oracle.iter().map(|&t| (PI * t).sin()).collect();
    let u = Uniform::new(-2.0, 2.0).expect("valid range");
    let delta1 = Normal::new(0.0, 2.0).expect("valid sd");
    let alpha = Normal::new(ALPHA_MEAN, ALPHA_VAR.sqrt()).expect("valid sd");

    let mut subjects = Vec::with_capacity(scn.n);
    let mut truth = Vec::with_capacity(scn.n);
    for i in 0..scn.n {
        let mut rng = stream(scn.seed, replicate, i as u64, SUBJECT_SLOT, Purpose::SubjectLevel);
        let delta = [u.sample(&mut rng), delta1.sample(&mut rng)];
        let mut eta = [0.0; 3];
        for k in 0..3 {
            let z: f64 = rng.sample(StandardNormal);
            eta[k] = ETA_MEAN[k] + ETA_SD[k] * z;
        }
        let alpha_i = alpha.sample(&mut rng);
        let beta_i: Vec<f64> = comps.iter().map(|c| eta[0] * c[0] + eta[1] * c[1] + eta[2] * c[2]).collect();
        // ∫β_i μ_i is shared by all visits.
        let mean_part = compensated_sum(
            (0..oracle.len()).map(|q| oracle_w[q] * beta_i[q] * (delta[0] + delta[1] * sin_pi[q])),
        );
        let psi_parts: Vec<f64> = (0..4)
            .map(|k| compensated_sum((0..oracle.len()).map(|q| oracle_w[q] * beta_i[q] * psis[q][k])))
            .collect();

        let mut visits = Vec::with_capacity(scn.m);
        let mut scores = Vec::with_capacity(scn.m);
        for j in 0..scn.m {
            let mut rs = stream(scn.seed, replicate, i as u64, j as u64, Purpose::Scores);
            let mut xi = [0.0; 4];
            for (k, x) in xi.iter_mut().enumerate() {
                let z: f64 = rs.sample(StandardNormal);
                *x = (2.0 / 2f64.powi(k as i32 + 1)).sqrt() * z;
            }
            let mut rr = stream(scn.seed, replicate, i as u64, j as u64, Purpose::ResponseNoise);
            let eps: f64 = rr.sample(StandardNormal);
            let integral = mean_part + 2f64.sqrt() * xi.iter().zip(&psi_parts).map(|(a, b)| a * b).sum::<f64>();
            let y = alpha_i + integral + scn.sigma_eps * eps;

            let mut rc = stream(scn.seed, replicate, i as u64, j as u64, Purpose::CurveNoise);
            let x: Vec<f64> = grid
                .iter()
                .map(|&t| {
                    let e: f64 = rc.sample(StandardNormal);
                    true_curve(&delta, &xi, t) + scn.sigma_e * e
                })
                .collect();
            visits.push(Visit {
                y,
                curve: FunctionalSample::new(subject_id(i), visit_id(j), grid.clone(), x),
            });
            scores.push(xi);
        }
        subjects.push(Subject {
            id: subject_id(i),
            visits,
        });
        truth.push(SubjectTruth {
            alpha: alpha_i,
            eta,
            delta,
            scores,
        });
    }
    Ok(Simulated {
        scenario: *scn,
        dataset: Dataset { subjects, domain },
        truth,
    })
}

fn subject_id(i: usize) -> String {
    format!("S{:04}", i + 1)
}

fn visit_id(j: usize) -> String {
    format!("V{:03}", j + 1)
}

/// `∫(β̂ − β)² / ∫β²` by the trapezoid rule on `grid`.
pub fn rmise_population(beta_hat: &[f64], beta_true: &[f64], grid: &[f64]) -> Result<f64> {
    rmise_individual(&[beta_hat.to_vec()], &[beta_true.to_vec()], grid)
}

/// `Σ_i ∫(β̂_i − β_i)² / Σ_i ∫β_i²` by the trapezoid rule on `grid`.
pub fn rmise_individual(hat: &[Vec<f64>], truth: &[Vec<f64>], grid: &[f64]) -> Result<f64> {
    if hat.len() != truth.len() {
        return invalid(format!("{} estimated curves for {} true curves", hat.len(), truth.len()));
    }
    let mut num = Vec::with_capacity(hat.len());
    let mut den = Vec::with_capacity(hat.len());
    for (h, t) in hat.iter().zip(truth) {
        if h.len() != grid.len() || t.len() != grid.len() {
            return invalid("curves must be evaluated on the common grid");
        }
        let d2: Vec<f64> = h.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).collect();
        let t2: Vec<f64> = t.iter().map(|b| b * b).collect();
        num.push(trapezoid(grid, &d2));
        den.push(trapezoid(grid, &t2));
    }
    let den = compensated_sum(den);
    if den <= 0.0 {
        return invalid("true slope functions integrate to zero");
    }
    Ok(compensated_sum(num) / den)
}

/// What to do with noisy covariates before fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Denoise {
    /// Reconstruct curves by FPCA when `σ_e > 0`.
    Auto,
    Never,
    Always,
}

impl std::str::FromStr for Denoise {
    type Err = FlmmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Self::Auto),
            "never" => Ok(Self::Never),
            "always" => Ok(Self::Always),
            _ => invalid(format!("unknown denoise mode `{s}` (known: auto, never, always)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub model: ModelSpec,
    /// Lambda selector spec, e.g. `fixed:1000:100` or `gcv`.
    pub selector: String,
    pub max_iter: usize,
    pub tol: f64,
    pub denoise: Denoise,
    pub fpca: FpcaConfig,
    /// Points of the evaluation grid for RMISE and pointwise summaries.
    pub eval_points: usize,
    pub level: f64,
    pub band_points: Vec<f64>,
}

impl StudyConfig {
    /// Settings used for the published cases: 35 cubic B-splines with
    /// second-derivative penalties for the polynomial case, 35 Fourier
    /// functions with harmonic-acceleration penalties for the periodic one.
    pub fn for_case(case: Case) -> Self {
        let (model, selector) = match case {
            Case::Poly => (ModelSpec::same("bspline:4:31", "d2"), "fixed:0.1:0.01"),
            Case::Fourier => (ModelSpec::same("fourier:35:1", "d2"), "fixed:0.01:0.01"),
        };
        Self {
            model,
            selector: selector.to_string(),
            max_iter: EmConfig::default().max_iter,
            tol: EmConfig::default().tol,
            denoise: Denoise::Auto,
            fpca: FpcaConfig::default(),
            eval_points: 201,
            level: 0.95,
            band_points: vec![0.25, 0.5, 0.75],
        }
    }

    pub fn em(&self) -> EmConfig {
        EmConfig {
            max_iter: self.max_iter,
            tol: self.tol,
            init: None,
        }
    }
}

/// Scores of one fit against the generating truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub replicate: usize,
    pub intercept: f64,
    pub intercept_se: f64,
    pub intercept_covered: bool,
    pub rmise_beta: f64,
    pub rmise_beta_i: f64,
    pub band_covered: Vec<bool>,
    pub gamma_invariants: bool,
    pub lambda_beta: f64,
    pub lambda_b: f64,
    pub sigma2_eps: f64,
    pub sigma2_a: f64,
    pub df: f64,
    pub converged: bool,
    pub iterations: usize,
    #[serde(skip)]
    pub beta_hat: Vec<f64>,
}

/// Fits one simulated dataset and scores it.
pub fn fit_replicate(sim: &Simulated, model: &Model, cfg: &StudyConfig) -> Result<(FitResult, Option<GcvSurface>)> {
    let denoise = match cfg.denoise {
        Denoise::Auto => sim.scenario.sigma_e > 0.0,
        Denoise::Never => false,
        Denoise::Always => true,
    };
    let data = if denoise {
        denoise_dataset(&sim.dataset, &cfg.fpca)?.dataset
    } else {
        sim.dataset.clone()
    };
    let db = model.design(&data)?;
    let selector = selector_registry().build(&cfg.selector, &())?;
    let sel = selector.select(&db, &model.penalties, &cfg.em())?;
    Ok((sel.fit, sel.surface))
}

/// Whether `γ̂` on `grid` is symmetric to 1e-12 and PSD to
/// `-1e-8·max|γ̂|`.
pub fn gamma_invariants_hold(fit: &FitResult, grid: &[f64]) -> Result<bool> {
    let g = gamma_surface(fit, grid)?;
    let scale = g.values.amax();
    if scale == 0.0 {
        return Ok(true);
    }
    Ok(max_abs_asymmetry(&g.values) <= 1e-12 * scale && min_eigenvalue(&g.values) >= -1e-8 * scale)
}

pub fn score_replicate(sim: &Simulated, fit: &FitResult, replicate: usize, cfg: &StudyConfig) -> Result<ReplicateResult> {
    let grid = Interval::new(0.0, 1.0)?.grid(cfg.eval_points);
    let f = coefficients_to_functions(fit, &grid)?;
    let case = sim.scenario.case;
    let beta_true: Vec<f64> = grid.iter().map(|&t| case.population_slope(t)).collect();
    let beta_i_true: Vec<Vec<f64>> = (0..sim.truth.len())
        .map(|i| grid.iter().map(|&t| sim.beta_i(i, t)).collect())
        .collect();
    let ci = intercept_ci(fit, cfg.level)?;
    let band = beta_band(fit, &cfg.band_points, cfg.level)?;
    let band_covered = cfg
        .band_points
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let b = case.population_slope(t);
            band.lower[k] <= b && b <= band.upper[k]
        })
        .collect();
    Ok(ReplicateResult {
        replicate,
        intercept: ci.estimate,
        intercept_se: ci.std_error,
        intercept_covered: ci.lower <= ALPHA_MEAN && ALPHA_MEAN <= ci.upper,
        rmise_beta: rmise_population(&f.beta, &beta_true, &grid)?,
        rmise_beta_i: rmise_individual(&f.beta_i, &beta_i_true, &grid)?,
        band_covered,
        gamma_invariants: gamma_invariants_hold(fit, &grid)?,
        lambda_beta: fit.lambdas.lambda_beta,
        lambda_b: fit.lambdas.lambda_b,
        sigma2_eps: fit.vc.sigma2_eps,
        sigma2_a: fit.vc.sigma2_a,
        df: fit.df,
        converged: fit.convergence.converged,
        iterations: fit.convergence.iterations,
        beta_hat: f.beta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterceptSummary {
    pub bias: f64,
    pub std: f64,
    pub rmse: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanMedian {
    pub mean: f64,
    pub median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub level: f64,
    pub intercept: f64,
    pub band_points: Vec<f64>,
    pub band: Vec<f64>,
    pub gamma_invariants_held: usize,
}

/// Pointwise mean, bias, STD and RMSE of `β̂(t)` across replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointwiseSummary {
    pub grid: Vec<f64>,
    pub truth: Vec<f64>,
    pub mean: Vec<f64>,
    pub bias: Vec<f64>,
    pub std: Vec<f64>,
    pub rmse: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub schema_version: u32,
    pub rng: String,
    pub scenario: Scenario,
    pub config: StudyConfig,
    pub replicates: usize,
    pub completed: usize,
    pub failures: Vec<(usize, String)>,
    pub intercept: InterceptSummary,
    pub rmise_beta: MeanMedian,
    pub rmise_beta_i: MeanMedian,
    pub coverage: Coverage,
    pub converged: usize,
    pub pointwise: PointwiseSummary,
    pub replicate_table: Vec<ReplicateResult>,
}

fn mean(v: &[f64]) -> f64 {
    compensated_sum(v.iter().copied()) / v.len() as f64
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Bias, STD (divisor `R`) and RMSE of estimates around `truth`, so that
/// `RMSE² = bias² + STD²`.
pub fn bias_std_rmse(estimates: &[f64], truth: f64) -> InterceptSummary {
    let m = mean(estimates);
    let var = compensated_sum(estimates.iter().map(|e| (e - m) * (e - m))) / estimates.len() as f64;
    let bias = m - truth;
    InterceptSummary {
        bias,
        std: var.sqrt(),
        rmse: (bias * bias + var).sqrt(),
    }
}

/// Runs `replicates` independent replicates in parallel and aggregates them
/// in replicate order.
pub fn run_study(scn: &Scenario, replicates: usize, cfg: &StudyConfig) -> Result<StudyReport> {
    scn.validate()?;
    if replicates == 0 {
        return invalid("a study needs at least one replicate");
    }
    let model = cfg.model.build(Interval::new(0.0, 1.0)?)?;
    let outcomes: Vec<Result<ReplicateResult>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let sim = generate_replicate(scn, r as u64)?;
            let (fit, _) = fit_replicate(&sim, &model, cfg)?;
            score_replicate(&sim, &fit, r, cfg)
        })
        .collect();
    let mut failures = Vec::new();
    let mut done = Vec::new();
    for (r, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(res) => done.push(res),
            Err(e) => failures.push((r, e.to_string())),
        }
    }
    if done.is_empty() {
        return Err(FlmmError::Inconsistent(format!("all {replicates} replicates failed")));
    }
    let grid = Interval::new(0.0, 1.0)?.grid(cfg.eval_points);
    let truth: Vec<f64> = grid.iter().map(|&t| scn.case.population_slope(t)).collect();
    let mut pw = PointwiseSummary {
        grid: grid.clone(),
        truth: truth.clone(),
        mean: Vec::new(),
        bias: Vec::new(),
        std: Vec::new(),
        rmse: Vec::new(),
    };
    for (q, b) in truth.iter().enumerate() {
        let vals: Vec<f64> = done.iter().map(|r| r.beta_hat[q]).collect();
        let s = bias_std_rmse(&vals, *b);
        pw.mean.push(b + s.bias);
        pw.bias.push(s.bias);
        pw.std.push(s.std);
        pw.rmse.push(s.rmse);
    }
    let k = done.len() as f64;
    let intercepts: Vec<f64> = done.iter().map(|r| r.intercept).collect();
    let rb: Vec<f64> = done.iter().map(|r| r.rmise_beta).collect();
    let rbi: Vec<f64> = done.iter().map(|r| r.rmise_beta_i).collect();
    let coverage = Coverage {
        level: cfg.level,
        intercept: done.iter().filter(|r| r.intercept_covered).count() as f64 / k,
        band_points: cfg.band_points.clone(),
        band: (0..cfg.band_points.len())
            .map(|p| done.iter().filter(|r| r.band_covered[p]).count() as f64 / k)
            .collect(),
        gamma_invariants_held: done.iter().filter(|r| r.gamma_invariants).count(),
    };
    Ok(StudyReport {
        schema_version: REPORT_SCHEMA_VERSION,
        rng: RNG_ALGORITHM.to_string(),
        scenario: *scn,
        config: cfg.clone(),
        replicates,
        completed: done.len(),
        failures,
        intercept: bias_std_rmse(&intercepts, ALPHA_MEAN),
        rmise_beta: MeanMedian {
            mean: mean(&rb),
            median: median(&rb),
        },
        rmise_beta_i: MeanMedian {
            mean: mean(&rbi),
            median: median(&rbi),
        },
        coverage,
        converged: done.iter().filter(|r| r.converged).count(),
        pointwise: pw,
        replicate_table: done,
    })
}

impl StudyReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("StudyReport serializes")
    }

    /// Header of the per-scenario summary table.
    pub const TABLE_HEADER: [&'static str; 9] =
        ["sigma_e", "sigma_eps", "n", "m", "bias", "std", "rmse", "rmise_beta", "rmise_beta_i"];

    pub fn table_row(&self) -> [String; 9] {
        let s = &self.scenario;
        [
            s.sigma_e.to_string(),
            s.sigma_eps.to_string(),
            s.n.to_string(),
            s.m.to_string(),
            format!("{:.6}", self.intercept.bias),
            format!("{:.6}", self.intercept.std),
            format!("{:.6}", self.intercept.rmse),
            format!("{:.6}", self.rmise_beta.mean),
            format!("{:.6}", self.rmise_beta_i.mean),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(seed: u64) -> Scenario {
        Scenario {
            n_grid: 21,
            ..Scenario::new(Case::Poly, 3, 2, 0.5, 0.5, seed)
        }
    }

    #[test]
    fn population_slope_endpoints() {
        assert_eq!(Case::Poly.population_slope(0.0), 2.0);
        assert!((Case::Poly.population_slope(1.0) - (3.0 + (-3f64).exp())).abs() < 1e-15);
        assert!((Case::Fourier.population_slope(0.25) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn same_seed_same_data() {
        let a = generate(&tiny(7)).unwrap();
        let b = generate(&tiny(7)).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_ne!(a.dataset, generate(&tiny(8)).unwrap().dataset);
    }

    #[test]
    fn smaller_designs_are_prefixes() {
        let big = generate(&Scenario { m: 4, n: 5, ..tiny(3) }).unwrap();
        let small = generate(&tiny(3)).unwrap();
        for i in 0..3 {
            assert_eq!(small.dataset.subjects[i].visits[..], big.dataset.subjects[i].visits[..2]);
        }
    }

    #[test]
    fn noiseless_response_is_the_integral() {
        let scn = Scenario {
            sigma_e: 0.0,
            sigma_eps: 0.0,
            ..tiny(11)
        };
        let sim = generate(&scn).unwrap();
        let fine = Interval::new(0.0, 1.0).unwrap().grid(20001);
        for i in 0..3 {
            for j in 0..2 {
                let f: Vec<f64> = fine.iter().map(|&t| sim.beta_i(i, t) * sim.true_x(i, j, t)).collect();
                let y = sim.truth[i].alpha + trapezoid(&fine, &f);
                let d = (sim.dataset.subjects[i].visits[j].y - y).abs();
                assert!(d < 1e-5, "{d}");
            }
        }
    }

    #[test]
    fn rmise_arithmetic() {
        let grid = Interval::new(0.0, 1.0).unwrap().grid(201);
        let b: Vec<f64> = grid.iter().map(|&t| Case::Poly.population_slope(t)).collect();
        assert_eq!(rmise_population(&b, &b, &grid).unwrap(), 0.0);
        let twice: Vec<f64> = b.iter().map(|v| 2.0 * v).collect();
        assert!((rmise_population(&twice, &b, &grid).unwrap() - 1.0).abs() < 1e-14);
        assert!(rmise_population(&b, &vec![0.0; 201], &grid).is_err());
    }

    #[test]
    fn bias_std_rmse_identity() {
        let s = bias_std_rmse(&[2.9, 3.1, 3.05, 2.98], 3.0);
        assert!((s.rmse * s.rmse - s.bias * s.bias - s.std * s.std).abs() < 1e-15);
    }

    #[test]
    fn case_names_parse() {
        assert_eq!("poly".parse::<Case>().unwrap(), Case::Poly);
        assert_eq!("fourier".parse::<Case>().unwrap().name(), "fourier");
        assert!("linear".parse::<Case>().is_err());
    }
}
