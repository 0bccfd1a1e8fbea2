//! Smoothing-parameter selection by generalized cross-validation.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::DesignBlocks;
use crate::em::{run_em, EmConfig, FitResult, Lambdas, PenalizedSystem, Penalties, VarianceComponents};
use crate::error::{invalid, FlmmError, Result};
use crate::linalg::{compensated_sum, symmetrize, SpdFactor};
use crate::registry::{arg, expect_arity, Registry};

/// `Σ_i ‖Y_i − W_iθ̂ − Z_iξ̂_i‖²`.
pub fn sum_squared_errors(db: &DesignBlocks, theta: &DVector<f64>, xi: &[DVector<f64>]) -> f64 {
    compensated_sum(
        db.blocks
            .iter()
            .zip(xi)
            .map(|(b, x)| (&b.y - &b.w * theta - &b.z * x).norm_squared()),
    )
}

/// `trace(Q)` through the per-subject blocks `Q_ii = I − σ_ε² H_i`.
pub fn effective_df_from_system(sys: &PenalizedSystem, db: &DesignBlocks) -> f64 {
    let s2 = sys.sigma2_eps();
    let traces = (0..db.n_subjects()).map(|i| sys.h_matrix(i).trace());
    db.total_obs() as f64 - s2 * compensated_sum(traces)
}

pub fn effective_df(db: &DesignBlocks, vc: &VarianceComponents, pens: &Penalties, lam: &Lambdas) -> Result<f64> {
    Ok(effective_df_from_system(&PenalizedSystem::new(vc, db, pens, lam)?, db))
}

/// `SSE / (N − df)²`, or `+∞` when `df ≥ N`.
pub fn gcv_value(sse: f64, n_obs: usize, df: f64) -> f64 {
    let resid_df = n_obs as f64 - df;
    if resid_df <= 0.0 {
        f64::INFINITY
    } else {
        sse / (resid_df * resid_df)
    }
}

/// GCV of a fit, recomputed from the stored effects and the design.
pub fn gcv_score(db: &DesignBlocks, fit: &FitResult) -> f64 {
    gcv_value(sum_squared_errors(db, &fit.theta, &fit.xi), db.total_obs(), fit.df)
}

/// Per-subject rows `Ŷ_i = Q_i Y` of the smoother, each `m_i × N`, from
/// `Q_i = S_i + Z_i D̃_ξ Z_i' Ṽ_i⁻¹ (E_i − S_i)` where `S_i` maps `Y` to
/// `W_iθ̂` and `E_i` selects `Y_i`. Dense; meant for small instances.
pub fn smoother_rows(sys: &PenalizedSystem, db: &DesignBlocks) -> Vec<DMatrix<f64>> {
    let n_obs = db.total_obs();
    let mut wv = DMatrix::zeros(db.fixed_dim(), n_obs);
    let mut off = 0;
    for (i, b) in db.blocks.iter().enumerate() {
        wv.columns_mut(off, b.y.len()).copy_from(&sys.vinv_w(i).transpose());
        off += b.y.len();
    }
    let theta_map = sys.fixed_factor().solve_mat(&wv);
    let mut rows = Vec::with_capacity(db.n_subjects());
    let mut off = 0;
    for (i, b) in db.blocks.iter().enumerate() {
        let m = b.y.len();
        let s_i = &b.w * &theta_map;
        let mut e_minus_s = -&s_i;
        for j in 0..m {
            e_minus_s[(j, off + j)] += 1.0;
        }
        let blup = &b.z * sys.d_tilde_xi() * b.z.transpose();
        rows.push(s_i + blup * sys.v_factor(i).solve_mat(&e_minus_s));
        off += m;
    }
    rows
}

/// The stacked smoother `Q = (W, Z)[σ⁻²C'C + diag(λ_β G̃, I ⊗ D̃_ξ⁻¹)]⁻¹σ⁻²C'`
/// with `C = (W, Z)`. Dense; requires `D̃_ξ` invertible.
pub fn smoother_block_formula(
    db: &DesignBlocks,
    vc: &VarianceComponents,
    pens: &Penalties,
    lam: &Lambdas,
) -> Result<DMatrix<f64>> {
    let sys = PenalizedSystem::new(vc, db, pens, lam)?;
    let d_inv = SpdFactor::new(sys.d_tilde_xi())?.inverse();
    let w = db.stacked_w();
    let z = db.block_diag_z();
    let p = w.ncols();
    let qn = z.ncols();
    let q = db.random_dim();
    let mut c = DMatrix::zeros(w.nrows(), p + qn);
    c.columns_mut(0, p).copy_from(&w);
    c.columns_mut(p, qn).copy_from(&z);
    let inv_s2 = 1.0 / vc.sigma2_eps;
    let mut m = c.transpose() * &c * inv_s2;
    let g = pens.g_tilde() * lam.lambda_beta;
    {
        let mut blk = m.view_mut((0, 0), (p, p));
        blk += &g;
    }
    for i in 0..db.n_subjects() {
        let at = p + i * q;
        let mut blk = m.view_mut((at, at), (q, q));
        blk += &d_inv;
    }
    symmetrize(&mut m);
    let f = SpdFactor::new(&m)?;
    Ok(&c * f.solve_mat(&c.transpose()) * inv_s2)
}

/// Stacks [`smoother_rows`] into the full `N × N` smoother.
pub fn smoother_matrix(sys: &PenalizedSystem, db: &DesignBlocks) -> DMatrix<f64> {
    let rows = smoother_rows(sys, db);
    let n_obs = db.total_obs();
    let mut q = DMatrix::zeros(n_obs, n_obs);
    let mut off = 0;
    for r in rows {
        let m = r.nrows();
        q.rows_mut(off, m).copy_from(&r);
        off += m;
    }
    q
}

/// Log₁₀-spaced grid of `(λ_β, λ_b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub log10_beta: Vec<f64>,
    pub log10_b: Vec<f64>,
}

impl Default for GridSpec {
    /// `λ_β ∈ 10^{-2..6}`, `λ_b ∈ 10^{-2..4}`, unit steps.
    fn default() -> Self {
        Self::linspace((-2.0, 6.0, 9), (-2.0, 4.0, 7)).expect("default grid")
    }
}

impl GridSpec {
    /// `(lo, hi, count)` in log₁₀ for each parameter.
    pub fn linspace(beta: (f64, f64, usize), b: (f64, f64, usize)) -> Result<Self> {
        fn axis((lo, hi, n): (f64, f64, usize)) -> Result<Vec<f64>> {
            if n == 0 || !lo.is_finite() || !hi.is_finite() || (n > 1 && hi < lo) {
                return invalid(format!("bad grid axis {lo}:{hi}:{n}"));
            }
            if n == 1 {
                return Ok(vec![lo]);
            }
            Ok((0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect())
        }
        Ok(Self {
            log10_beta: axis(beta)?,
            log10_b: axis(b)?,
        })
    }

    pub fn single(lam: Lambdas) -> Self {
        Self {
            log10_beta: vec![lam.lambda_beta.log10()],
            log10_b: vec![lam.lambda_b.log10()],
        }
    }

    pub fn len(&self) -> usize {
        self.log10_beta.len() * self.log10_b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcvPoint {
    pub lambda_beta: f64,
    pub lambda_b: f64,
    pub gcv: f64,
    pub df: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Scores over the grid, ordered with `λ_β` varying fastest within each
/// `λ_b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcvSurface {
    pub points: Vec<GcvPoint>,
    pub best: usize,
}

impl GcvSurface {
    pub fn best_point(&self) -> &GcvPoint {
        &self.points[self.best]
    }

    pub fn best_lambdas(&self) -> Lambdas {
        let p = self.best_point();
        Lambdas {
            lambda_beta: p.lambda_beta,
            lambda_b: p.lambda_b,
        }
    }
}

/// Index of the smallest finite score; exact ties go to the larger
/// `(λ_β, λ_b)` in lexicographic order.
pub fn argmin_gcv(points: &[GcvPoint]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, p) in points.iter().enumerate() {
        if !p.gcv.is_finite() {
            continue;
        }
        best = match best {
            None => Some(i),
            Some(b) => {
                let q = &points[b];
                let better = p.gcv < q.gcv
                    || (p.gcv == q.gcv && (p.lambda_beta, p.lambda_b) > (q.lambda_beta, q.lambda_b));
                Some(if better { i } else { b })
            }
        };
    }
    best
}

/// Full EM fit at every grid point. Rows of constant `λ_b` run in parallel;
/// within a row each fit starts from the previous point's variance
/// components when `warm_start` is set.
pub fn gcv_search_with(
    db: &DesignBlocks,
    pens: &Penalties,
    grid: &GridSpec,
    cfg: &EmConfig,
    warm_start: bool,
) -> Result<(GcvSurface, FitResult)> {
    if grid.is_empty() {
        return invalid("empty lambda grid");
    }
    let rows: Vec<Vec<(GcvPoint, Option<FitResult>)>> = grid
        .log10_b
        .par_iter()
        .map(|&lb| {
            let mut init = cfg.init.clone();
            let mut row = Vec::with_capacity(grid.log10_beta.len());
            for &lbeta in &grid.log10_beta {
                let lam = Lambdas {
                    lambda_beta: 10f64.powf(lbeta),
                    lambda_b: 10f64.powf(lb),
                };
                let run_cfg = EmConfig {
                    init: init.clone(),
                    ..cfg.clone()
                };
                match run_em(db, pens, &lam, &run_cfg) {
                    Ok(fit) => {
                        if warm_start {
                            init = Some(fit.vc.clone());
                        }
                        row.push((
                            GcvPoint {
                                lambda_beta: lam.lambda_beta,
                                lambda_b: lam.lambda_b,
                                gcv: fit.gcv,
                                df: fit.df,
                                converged: fit.convergence.converged,
                                iterations: fit.convergence.iterations,
                            },
                            Some(fit),
                        ));
                    }
                    Err(_) => row.push((
                        GcvPoint {
                            lambda_beta: lam.lambda_beta,
                            lambda_b: lam.lambda_b,
                            gcv: f64::INFINITY,
                            df: f64::NAN,
                            converged: false,
                            iterations: 0,
                        },
                        None,
                    )),
                }
            }
            row
        })
        .collect();
    let (points, fits): (Vec<_>, Vec<_>) = rows.into_iter().flatten().unzip();
    let best = argmin_gcv(&points).ok_or(FlmmError::NoFiniteScore)?;
    let fit = fits.into_iter().nth(best).flatten().ok_or(FlmmError::NoFiniteScore)?;
    Ok((GcvSurface { points, best }, fit))
}

pub fn gcv_search(db: &DesignBlocks, pens: &Penalties, grid: &GridSpec, cfg: &EmConfig) -> Result<(GcvSurface, FitResult)> {
    gcv_search_with(db, pens, grid, cfg, true)
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub fit: FitResult,
    pub surface: Option<GcvSurface>,
}

/// A rule for choosing `(λ_β, λ_b)` and returning the fit at the choice.
pub trait LambdaSelector: Send + Sync + std::fmt::Debug {
    fn spec(&self) -> String;
    fn select(&self, db: &DesignBlocks, pens: &Penalties, cfg: &EmConfig) -> Result<Selection>;
}

#[derive(Debug, Clone, Copy)]
pub struct FixedLambdas(pub Lambdas);

#[derive(Debug, Clone)]
pub struct GcvGrid(pub GridSpec);

impl LambdaSelector for FixedLambdas {
    fn spec(&self) -> String {
        format!("fixed:{}:{}", self.0.lambda_beta, self.0.lambda_b)
    }

    fn select(&self, db: &DesignBlocks, pens: &Penalties, cfg: &EmConfig) -> Result<Selection> {
        Ok(Selection {
            fit: run_em(db, pens, &self.0, cfg)?,
            surface: None,
        })
    }
}

impl LambdaSelector for GcvGrid {
    fn spec(&self) -> String {
        "gcv".to_string()
    }

    fn select(&self, db: &DesignBlocks, pens: &Penalties, cfg: &EmConfig) -> Result<Selection> {
        let (surface, fit) = gcv_search(db, pens, &self.0, cfg)?;
        Ok(Selection {
            fit,
            surface: Some(surface),
        })
    }
}

/// Selectors by name:
///
/// * `fixed:<lambda_beta>:<lambda_b>`
/// * `gcv` (default grid) or
///   `gcv:<lo_beta>:<hi_beta>:<n_beta>:<lo_b>:<hi_b>:<n_b>` in log₁₀
pub fn selector_registry() -> &'static Registry<dyn LambdaSelector> {
    static REG: OnceLock<Registry<dyn LambdaSelector>> = OnceLock::new();
    REG.get_or_init(|| {
        let mut r: Registry<dyn LambdaSelector> = Registry::new("lambda selector");
        r.register("fixed", "fixed:<lambda_beta>:<lambda_b>", |args, _| {
            expect_arity(args, 2, 2)?;
            let lam = Lambdas::new(arg(args, 0, "lambda_beta")?, arg(args, 1, "lambda_b")?)?;
            Ok(Box::new(FixedLambdas(lam)) as Box<dyn LambdaSelector>)
        });
        r.register("gcv", "gcv[:<lo_beta>:<hi_beta>:<n_beta>:<lo_b>:<hi_b>:<n_b>]", |args, _| {
            if args.is_empty() {
                return Ok(Box::new(GcvGrid(GridSpec::default())) as Box<dyn LambdaSelector>);
            }
            expect_arity(args, 6, 6)?;
            let grid = GridSpec::linspace(
                (arg(args, 0, "lo_beta")?, arg(args, 1, "hi_beta")?, arg(args, 2, "n_beta")?),
                (arg(args, 3, "lo_b")?, arg(args, 4, "hi_b")?, arg(args, 5, "n_b")?),
            )?;
            Ok(Box::new(GcvGrid(grid)) as Box<dyn LambdaSelector>)
        });
        r
    })
}
