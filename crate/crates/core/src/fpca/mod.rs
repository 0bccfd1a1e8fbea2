//! Functional principal component analysis of noisy curves with
//! conditional-expectation scores, used to denoise functional covariates
//! before fitting.

pub mod smooth;

use std::collections::BTreeMap;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::Interval;
use crate::design::{Dataset, FunctionalSample};
use crate::error::{invalid, FlmmError, Result};
use crate::linalg::{sorted_eigen, symmetrize, SpdFactor};
use crate::quadrature::{interpolate_linear, trapezoid_weights};
use crate::registry::{arg, expect_arity, Registry};
use smooth::{local_linear, local_linear_surface_offdiag, BinnedSurface};

/// Subjects with at least this many curves are centered at their own mean.
pub const SUBJECT_MEAN_MIN_CURVES: usize = 5;
/// Above this many distinct observation times the raw covariance is binned
/// to the working grid.
pub const MAX_RAW_SUPPORT: usize = 1024;

/// Whether one decomposition is shared by all subjects or each subject
/// gets its own.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FpcaScope {
    Pooled,
    PerSubject,
}

impl std::str::FromStr for FpcaScope {
    type Err = FlmmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pooled" => Ok(Self::Pooled),
            "per-subject" => Ok(Self::PerSubject),
            _ => invalid(format!("unknown FPCA scope `{s}` (known: pooled, per-subject)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpcaConfig {
    pub n_grid: usize,
    pub mean_bandwidth: Option<f64>,
    pub cov_bandwidth: Option<f64>,
    /// `pve:<threshold>` or `fixed:<M>`.
    pub rule: String,
    pub scope: FpcaScope,
}

impl Default for FpcaConfig {
    fn default() -> Self {
        Self {
            n_grid: 101,
            mean_bandwidth: None,
            cov_bandwidth: None,
            rule: "pve:0.95".to_string(),
            scope: FpcaScope::Pooled,
        }
    }
}

/// A rule for the number of retained components.
pub trait FpcRule: Send + Sync + std::fmt::Debug {
    fn spec(&self) -> String;
    fn choose(&self, eigenvalues: &[f64]) -> usize;
}

#[derive(Debug, Clone, Copy)]
pub struct Pve(pub f64);

#[derive(Debug, Clone, Copy)]
pub struct FixedCount(pub usize);

impl FpcRule for Pve {
    fn spec(&self) -> String {
        format!("pve:{}", self.0)
    }

    fn choose(&self, eigenvalues: &[f64]) -> usize {
        let cum = cumulative_pve(eigenvalues);
        cum.iter()
            .position(|&p| p >= self.0 - 1e-12)
            .map_or(eigenvalues.len(), |k| k + 1)
    }
}

impl FpcRule for FixedCount {
    fn spec(&self) -> String {
        format!("fixed:{}", self.0)
    }

    fn choose(&self, eigenvalues: &[f64]) -> usize {
        self.0.min(eigenvalues.len())
    }
}

/// `pve:<threshold in (0, 1]>` or `fixed:<M>`.
pub fn rule_registry() -> &'static Registry<dyn FpcRule> {
    static REG: OnceLock<Registry<dyn FpcRule>> = OnceLock::new();
    REG.get_or_init(|| {
        let mut r: Registry<dyn FpcRule> = Registry::new("FPC count rule");
        r.register("pve", "pve:<threshold>", |args, _| {
            expect_arity(args, 1, 1)?;
            let p: f64 = arg(args, 0, "threshold")?;
            if !(p > 0.0 && p <= 1.0) {
                return invalid(format!("PVE threshold must lie in (0, 1], got {p}"));
            }
            Ok(Box::new(Pve(p)) as Box<dyn FpcRule>)
        });
        r.register("fixed", "fixed:<count>", |args, _| {
            expect_arity(args, 1, 1)?;
            Ok(Box::new(FixedCount(arg(args, 0, "count")?)) as Box<dyn FpcRule>)
        });
        r
    })
}

pub fn cumulative_pve(eigenvalues: &[f64]) -> Vec<f64> {
    let total: f64 = eigenvalues.iter().sum();
    let mut acc = 0.0;
    eigenvalues
        .iter()
        .map(|v| {
            acc += v;
            if total > 0.0 {
                (acc / total).min(1.0)
            } else {
                1.0
            }
        })
        .collect()
}

pub fn choose_num_fpcs(eigenvalues: &[f64], rule: &str) -> Result<usize> {
    Ok(rule_registry().build(rule, &())?.choose(eigenvalues))
}

/// Mean function, eigen-pairs and noise variance on a uniform working grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpcaModel {
    pub grid: Vec<f64>,
    /// Pooled mean of all curves.
    pub mean: Vec<f64>,
    /// Own mean curves of subjects with enough curves.
    pub subject_means: BTreeMap<String, Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub eigenfunctions: Vec<Vec<f64>>,
    pub noise_var: f64,
    pub pve: Vec<f64>,
    pub n_components: usize,
    pub mean_bandwidth: f64,
    pub cov_bandwidth: f64,
}

impl FpcaModel {
    /// The mean a curve of `subject` is centered at.
    pub fn mean_for(&self, subject: &str) -> &[f64] {
        self.subject_means.get(subject).map_or(&self.mean, Vec::as_slice)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("FpcaModel serializes")
    }
}

fn sd(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count() as f64;
    let m = values.clone().sum::<f64>() / n;
    (values.map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt()
}

fn max_gap(grid: &[f64]) -> f64 {
    grid.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
}

/// `1.06·sd(t)·n^{-1/5}`, at least twice the working-grid spacing.
pub fn mean_bandwidth_rule(curves: &[&FunctionalSample], grid: &[f64]) -> f64 {
    let t = curves.iter().flat_map(|c| c.t.iter().copied());
    let n = t.clone().count() as f64;
    (1.06 * sd(t) * n.powf(-0.2)).max(2.0 * max_gap(grid))
}

/// `sd(t)·P^{-1/6}` for `P` raw off-diagonal pairs, at least twice the
/// working-grid spacing.
pub fn cov_bandwidth_rule(curves: &[&FunctionalSample], grid: &[f64]) -> f64 {
    let t = curves.iter().flat_map(|c| c.t.iter().copied());
    let pairs: f64 = curves.iter().map(|c| (c.t.len() * c.t.len().saturating_sub(1)) as f64).sum();
    (sd(t) * pairs.max(1.0).powf(-1.0 / 6.0)).max(2.0 * max_gap(grid))
}

/// Local-linear smooth of all `(t, x)` points on `grid`.
pub fn estimate_mean(curves: &[&FunctionalSample], grid: &[f64], h: f64) -> Result<Vec<f64>> {
    let mut support: BTreeMap<u64, (f64, f64, f64)> = BTreeMap::new();
    for c in curves {
        for (t, x) in c.t.iter().zip(&c.x) {
            let e = support.entry(t.to_bits()).or_insert((*t, 0.0, 0.0));
            e.1 += x;
            e.2 += 1.0;
        }
    }
    if support.is_empty() {
        return invalid("no observations for the mean");
    }
    let mut pts: Vec<(f64, f64, f64)> = support.into_values().map(|(t, s, w)| (t, s / w, w)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (x, rest): (Vec<f64>, Vec<(f64, f64)>) = pts.into_iter().map(|(t, y, w)| (t, (y, w))).unzip();
    let (y, w): (Vec<f64>, Vec<f64>) = rest.into_iter().unzip();
    local_linear(&x, &y, &w, grid, h)
}

/// A curve minus its mean, with the factor applied to its cross-products.
#[derive(Debug, Clone)]
pub struct CenteredCurve {
    pub t: Vec<f64>,
    pub r: Vec<f64>,
    pub scale: f64,
}

fn bin_index(u: &[f64], t: f64) -> usize {
    let k = u.partition_point(|&v| v < t);
    if k == 0 {
        0
    } else if k == u.len() {
        u.len() - 1
    } else if t - u[k - 1] <= u[k] - t {
        k - 1
    } else {
        k
    }
}

/// Raw cross-products binned on the distinct observation times, or on the
/// working grid when there are too many of them.
pub fn raw_covariance(curves: &[CenteredCurve], grid: &[f64]) -> BinnedSurface {
    let mut u: Vec<f64> = curves.iter().flat_map(|c| c.t.iter().copied()).collect();
    u.sort_by(f64::total_cmp);
    u.dedup();
    if u.len() > MAX_RAW_SUPPORT {
        u = grid.to_vec();
    }
    let n = u.len();
    let mut sum = DMatrix::zeros(n, n);
    let mut weight = DMatrix::zeros(n, n);
    for c in curves {
        let idx: Vec<usize> = c.t.iter().map(|&t| bin_index(&u, t)).collect();
        for (a, &ia) in idx.iter().enumerate() {
            for (b, &ib) in idx.iter().enumerate() {
                sum[(ia, ib)] += c.scale * c.r[a] * c.r[b];
                weight[(ia, ib)] += 1.0;
            }
        }
    }
    BinnedSurface { u, sum, weight }
}

/// Smoothed covariance surface on `grid` and the measurement-error
/// variance: the mean gap between the smoothed raw diagonal and the
/// surface diagonal, floored at zero.
pub fn smooth_covariance(curves: &[CenteredCurve], grid: &[f64], h: f64) -> Result<(DMatrix<f64>, f64)> {
    if curves.iter().all(|c| c.t.len() < 2) {
        return invalid("covariance needs curves with at least two observations");
    }
    let raw = raw_covariance(curves, grid);
    let surface = local_linear_surface_offdiag(&raw, grid, h)?;
    let (mut x, mut y, mut w) = (Vec::new(), Vec::new(), Vec::new());
    for a in 0..raw.u.len() {
        if raw.weight[(a, a)] > 0.0 {
            x.push(raw.u[a]);
            y.push(raw.mean(a, a));
            w.push(raw.weight[(a, a)]);
        }
    }
    let diag = local_linear(&x, &y, &w, grid, h)?;
    let gap = diag.iter().enumerate().map(|(k, d)| d - surface[(k, k)]).sum::<f64>() / grid.len() as f64;
    Ok((surface, gap.max(0.0)))
}

/// Eigen-pairs of the covariance operator discretized with trapezoid
/// weights `w`: eigenvectors of `W^{1/2} C W^{1/2}`, mapped back by
/// `W^{-1/2}` so that `Σ w φ_j φ_k = δ_jk`. Nonpositive eigenvalues are
/// dropped.
pub fn eigen_decompose(surface: &DMatrix<f64>, grid: &[f64], max_components: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let w = trapezoid_weights(grid);
    let sw: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
    let n = grid.len();
    let mut b = DMatrix::from_fn(n, n, |i, j| sw[i] * surface[(i, j)] * sw[j]);
    symmetrize(&mut b);
    let (vals, vecs) = sorted_eigen(&b);
    let top = vals.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let mut values = Vec::new();
    let mut functions = Vec::new();
    for k in 0..n.min(max_components) {
        if !(vals[k] > 1e-12 * top) {
            break;
        }
        let mut f: Vec<f64> = (0..n).map(|i| vecs[(i, k)] / sw[i]).collect();
        let pivot = f.iter().copied().fold(0.0_f64, |a, v| if v.abs() > a.abs() { v } else { a });
        if pivot < 0.0 {
            f.iter_mut().for_each(|v| *v = -*v);
        }
        values.push(vals[k]);
        functions.push(f);
    }
    (values, functions)
}

/// Conditional-expectation scores `(Φ'Φ + σ²Λ⁻¹)⁻¹ Φ'(w − μ)` of one curve
/// on its own observation times, using the first `m` components.
pub fn pace_scores(curve: &FunctionalSample, model: &FpcaModel, m: usize) -> Result<DVector<f64>> {
    if m > model.eigenvalues.len() {
        return invalid(format!("{m} components requested, {} available", model.eigenvalues.len()));
    }
    if m == 0 {
        return Ok(DVector::zeros(0));
    }
    let mean = model.mean_for(&curve.subject_id);
    let nt = curve.t.len();
    let phi = DMatrix::from_fn(nt, m, |i, k| interpolate_linear(&model.grid, &model.eigenfunctions[k], curve.t[i]));
    let r = DVector::from_fn(nt, |i, _| curve.x[i] - interpolate_linear(&model.grid, mean, curve.t[i]));
    let mut lhs = phi.transpose() * &phi;
    for k in 0..m {
        lhs[(k, k)] += model.noise_var / model.eigenvalues[k];
    }
    symmetrize(&mut lhs);
    Ok(SpdFactor::new(&lhs)?.solve_vec(&phi.tr_mul(&r)))
}

/// `X̂(t) = μ̂(t) + Σ_k ξ̂_k φ̂_k(t)` on the working grid.
pub fn reconstruct(curve: &FunctionalSample, model: &FpcaModel, m: usize) -> Result<FunctionalSample> {
    let scores = pace_scores(curve, model, m)?;
    let mut x = model.mean_for(&curve.subject_id).to_vec();
    for (k, s) in scores.iter().enumerate() {
        for (xi, f) in x.iter_mut().zip(&model.eigenfunctions[k]) {
            *xi += s * f;
        }
    }
    Ok(FunctionalSample::new(
        curve.subject_id.clone(),
        curve.visit_id.clone(),
        model.grid.clone(),
        x,
    ))
}

/// Fits one decomposition to `subjects`, each a list of curves.
pub fn fit_fpca(subjects: &[(String, Vec<&FunctionalSample>)], domain: Interval, cfg: &FpcaConfig) -> Result<FpcaModel> {
    if cfg.n_grid < 2 {
        return invalid("FPCA working grid needs at least two points");
    }
    let rule = rule_registry().build(&cfg.rule, &())?;
    let grid = domain.grid(cfg.n_grid);
    let all: Vec<&FunctionalSample> = subjects.iter().flat_map(|(_, c)| c.iter().copied()).collect();
    if all.is_empty() {
        return invalid("no curves for FPCA");
    }
    let h_mean = cfg.mean_bandwidth.unwrap_or_else(|| mean_bandwidth_rule(&all, &grid));
    let h_cov = cfg.cov_bandwidth.unwrap_or_else(|| cov_bandwidth_rule(&all, &grid));
    let mean = estimate_mean(&all, &grid, h_mean)?;

    let mut subject_means = BTreeMap::new();
    let mut centered = Vec::with_capacity(all.len());
    for (id, curves) in subjects {
        let m = curves.len();
        let (own, scale) = if m >= SUBJECT_MEAN_MIN_CURVES {
            let h = cfg.mean_bandwidth.unwrap_or_else(|| mean_bandwidth_rule(curves, &grid));
            let own = estimate_mean(curves, &grid, h)?;
            subject_means.insert(id.clone(), own.clone());
            (own, m as f64 / (m as f64 - 1.0))
        } else {
            (mean.clone(), 1.0)
        };
        for c in curves {
            let r = c.t.iter().zip(&c.x).map(|(t, x)| x - interpolate_linear(&grid, &own, *t)).collect();
            centered.push(CenteredCurve {
                t: c.t.clone(),
                r,
                scale,
            });
        }
    }
    let (surface, noise_var) = smooth_covariance(&centered, &grid, h_cov)?;
    let (eigenvalues, eigenfunctions) = eigen_decompose(&surface, &grid, grid.len());
    let pve = cumulative_pve(&eigenvalues);
    let n_components = rule.choose(&eigenvalues);
    Ok(FpcaModel {
        grid,
        mean,
        subject_means,
        eigenvalues,
        eigenfunctions,
        noise_var,
        pve,
        n_components,
        mean_bandwidth: h_mean,
        cov_bandwidth: h_cov,
    })
}

/// Result of denoising a dataset: reconstructed curves on the working grid
/// and the model(s) used.
#[derive(Debug, Clone)]
pub struct Denoised {
    pub dataset: Dataset,
    /// One model when pooled, one per subject otherwise (dataset order).
    pub models: Vec<FpcaModel>,
}

/// Replaces every curve by its FPCA reconstruction.
pub fn denoise_dataset(d: &Dataset, cfg: &FpcaConfig) -> Result<Denoised> {
    d.validate()?;
    let groups: Vec<(String, Vec<&FunctionalSample>)> = d
        .subjects
        .iter()
        .map(|s| (s.id.clone(), s.visits.iter().map(|v| &v.curve).collect()))
        .collect();
    let models = match cfg.scope {
        FpcaScope::Pooled => vec![fit_fpca(&groups, d.domain, cfg)?],
        FpcaScope::PerSubject => groups
            .iter()
            .map(|g| fit_fpca(std::slice::from_ref(g), d.domain, cfg))
            .collect::<Result<_>>()?,
    };
    let model_for = |i: usize| if models.len() == 1 { &models[0] } else { &models[i] };
    let subjects = d
        .subjects
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let model = model_for(i);
            let mut out = s.clone();
            for v in out.visits.iter_mut() {
                v.curve = reconstruct(&v.curve, model, model.n_components)?;
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Denoised {
        dataset: Dataset {
            subjects,
            domain: d.domain,
        },
        models,
    })
}
