//! Penalized fixed/random-effect estimation and the REML-based EM
//! algorithm for the variance components `(σ_a², σ_ε², D)`.
//!
//! With `D_ξ = diag(σ_a², D)`, `G_ξ = diag(0, G_b)` and
//! `D̃_ξ = (D_ξ⁻¹ + λ_b G_ξ)⁻¹`, each iteration
//!
//! 1. refreshes `D̃_ξ` and `Ṽ_i = Z_i D̃_ξ Z_i' + σ_ε² I`, then solves
//!    `θ̂ = (W'Ṽ⁻¹W + λ_β G̃)⁻¹ W'Ṽ⁻¹Y` and
//!    `ξ̂_i = D̃_ξ Z_i' Ṽ_i⁻¹ (Y_i − W_i θ̂)`;
//! 2. updates `σ_ε²` and `D_ξ` from the residuals and
//!    `H_i = Ṽ_i⁻¹ − Ṽ_i⁻¹ W_i (W'Ṽ⁻¹W + λ_β G̃)⁻¹ W_i' Ṽ_i⁻¹`.
//!
//! Everything is solved subject by subject; the `N × N` matrix `Ṽ` is never
//! formed.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{Basis, BasisDescriptor, RoughnessOperator};
use crate::design::DesignBlocks;
use crate::error::{invalid, FlmmError, Result};
use crate::linalg::{clip_eigenvalues, compensated_sum, max_abs_asymmetry, psd_sqrt, symmetrize, SpdFactor};
use crate::quadrature::QuadratureRule;
use crate::serde_mat;

pub const SIGMA2_EPS_FLOOR: f64 = 1e-12;
/// Eigenvalue floor for `D`, relative to its trace.
pub const D_EIGEN_FLOOR: f64 = 1e-10;
pub const FIT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceComponents {
    pub sigma2_a: f64,
    pub sigma2_eps: f64,
    #[serde(with = "serde_mat::matrix")]
    pub d: DMatrix<f64>,
}

impl VarianceComponents {
    /// Validated components: `σ_a² ≥ 0`, `σ_ε²` at or above the floor,
    /// `D` square, symmetric to 1e-12 and PSD to `-1e-10·‖D‖`.
    pub fn new(sigma2_a: f64, sigma2_eps: f64, d: DMatrix<f64>) -> Result<Self> {
        if !(sigma2_a >= 0.0 && sigma2_a.is_finite()) {
            return invalid(format!("sigma2_a must be finite and nonnegative, got {sigma2_a}"));
        }
        if !(sigma2_eps >= SIGMA2_EPS_FLOOR && sigma2_eps.is_finite()) {
            return invalid(format!("sigma2_eps must be at least {SIGMA2_EPS_FLOOR:e}, got {sigma2_eps}"));
        }
        if d.nrows() != d.ncols() {
            return invalid("D must be square");
        }
        if d.iter().any(|v| !v.is_finite()) {
            return invalid("D has non-finite entries");
        }
        if max_abs_asymmetry(&d) > 1e-12 * d.amax().max(1.0) {
            return invalid("D must be symmetric");
        }
        if d.nrows() > 0 && crate::linalg::min_eigenvalue(&d) < -1e-10 * d.norm() {
            return invalid("D must be positive semi-definite");
        }
        Ok(Self {
            sigma2_a,
            sigma2_eps,
            d,
        })
    }

    /// `σ_a² = σ_ε² = 1`, `D = I_K`.
    pub fn initial(k: usize) -> Self {
        Self {
            sigma2_a: 1.0,
            sigma2_eps: 1.0,
            d: DMatrix::identity(k, k),
        }
    }

    /// `D_ξ = diag(σ_a², D)`.
    pub fn d_xi(&self) -> DMatrix<f64> {
        let k = self.d.nrows();
        let mut m = DMatrix::zeros(k + 1, k + 1);
        m[(0, 0)] = self.sigma2_a;
        m.view_mut((1, 1), (k, k)).copy_from(&self.d);
        m
    }

    fn flat(&self) -> impl Iterator<Item = f64> + '_ {
        [self.sigma2_a, self.sigma2_eps].into_iter().chain(self.d.iter().copied())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lambdas {
    pub lambda_beta: f64,
    pub lambda_b: f64,
}

impl Lambdas {
    pub fn new(lambda_beta: f64, lambda_b: f64) -> Result<Self> {
        for (name, v) in [("lambda_beta", lambda_beta), ("lambda_b", lambda_b)] {
            if !(v.is_finite() && v >= 0.0) {
                return invalid(format!("{name} must be finite and nonnegative, got {v}"));
            }
        }
        Ok(Self {
            lambda_beta,
            lambda_b,
        })
    }
}

/// Roughness penalties for the population slope (`G`, `J×J`) and the
/// random slopes (`G_b`, `K×K`), with the specs needed to rebuild them.
#[derive(Debug, Clone, PartialEq)]
pub struct Penalties {
    pub beta_basis: BasisDescriptor,
    pub b_basis: BasisDescriptor,
    pub beta_op: String,
    pub b_op: String,
    pub quadrature: String,
    pub g: DMatrix<f64>,
    pub g_b: DMatrix<f64>,
}

impl Penalties {
    pub fn build(
        beta_basis: &dyn Basis,
        beta_op: &dyn RoughnessOperator,
        b_basis: &dyn Basis,
        b_op: &dyn RoughnessOperator,
        quad: &dyn QuadratureRule,
    ) -> Result<Self> {
        let g = crate::basis::penalty_matrix(beta_basis, beta_op, quad)?.entries;
        let g_b = crate::basis::penalty_matrix(b_basis, b_op, quad)?.entries;
        Ok(Self {
            beta_basis: beta_basis.descriptor(),
            b_basis: b_basis.descriptor(),
            beta_op: beta_op.spec(),
            b_op: b_op.spec(),
            quadrature: quad.spec(),
            g,
            g_b,
        })
    }

    /// Rebuilds penalties from stored descriptors and spec strings.
    pub fn from_specs(
        beta_basis: &BasisDescriptor,
        beta_op: &str,
        b_basis: &BasisDescriptor,
        b_op: &str,
        quadrature: &str,
    ) -> Result<Self> {
        let bb = beta_basis.build()?;
        let kb = b_basis.build()?;
        let ops = crate::basis::roughness_registry();
        let op_beta = ops.build(beta_op, &bb.domain())?;
        let op_b = ops.build(b_op, &kb.domain())?;
        let quad = crate::quadrature::registry().build(quadrature, &())?;
        Self::build(bb.as_ref(), op_beta.as_ref(), kb.as_ref(), op_b.as_ref(), quad.as_ref())
    }

    /// `G̃ = diag(0, G)`.
    pub fn g_tilde(&self) -> DMatrix<f64> {
        let j = self.g.nrows();
        let mut m = DMatrix::zeros(j + 1, j + 1);
        m.view_mut((1, 1), (j, j)).copy_from(&self.g);
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmConfig {
    pub max_iter: usize,
    pub tol: f64,
    /// Starting variance components; `None` uses `(1, 1, I)`.
    pub init: Option<VarianceComponents>,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iter: 500,
            tol: 1e-6,
            init: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmState {
    pub vc: VarianceComponents,
    pub theta: DVector<f64>,
    pub xi: Vec<DVector<f64>>,
    pub iteration: usize,
    /// Penalized restricted log-likelihood at the variance components the
    /// effects were estimated with; diagnostic only.
    pub objective: f64,
}

pub fn init_state(cfg: &EmConfig, db: &DesignBlocks) -> Result<EmState> {
    let k = db.random_dim() - 1;
    let vc = match &cfg.init {
        Some(vc) => {
            let vc = VarianceComponents::new(vc.sigma2_a, vc.sigma2_eps, vc.d.clone())?;
            if vc.d.nrows() != k {
                return invalid(format!("initial D is {}x{}, expected {k}x{k}", vc.d.nrows(), vc.d.ncols()));
            }
            vc
        }
        None => VarianceComponents::initial(k),
    };
    Ok(EmState {
        vc,
        theta: DVector::zeros(db.fixed_dim()),
        xi: vec![DVector::zeros(k + 1); db.n_subjects()],
        iteration: 0,
        objective: f64::NAN,
    })
}

/// `(D⁻¹ + λ G)⁻¹`, evaluated as `R (I + λ R G R)⁻¹ R` with `R = D^{1/2}`
/// so that a singular `D` needs no inverse.
pub fn penalized_random_cov(d: &DMatrix<f64>, g_b: &DMatrix<f64>, lambda_b: f64) -> Result<DMatrix<f64>> {
    if lambda_b == 0.0 {
        return Ok(d.clone());
    }
    let k = d.nrows();
    let r = psd_sqrt(d);
    let mut m = &r * g_b * &r * lambda_b;
    for i in 0..k {
        m[(i, i)] += 1.0;
    }
    symmetrize(&mut m);
    let f = SpdFactor::new(&m)?;
    let mut out = &r * f.solve_mat(&r);
    symmetrize(&mut out);
    Ok(out)
}

/// Factorizations shared by estimation, EM updates, smoother traces and
/// covariance: `D̃_ξ`, every `Ṽ_i`, and `A = W'Ṽ⁻¹W + λ_β G̃`.
#[derive(Debug, Clone)]
pub struct PenalizedSystem {
    d_tilde_xi: DMatrix<f64>,
    v: Vec<SpdFactor>,
    vinv_w: Vec<DMatrix<f64>>,
    a: SpdFactor,
    sigma2_eps: f64,
}

impl PenalizedSystem {
    pub fn new(vc: &VarianceComponents, db: &DesignBlocks, pens: &Penalties, lam: &Lambdas) -> Result<Self> {
        let q = db.random_dim();
        let p = db.fixed_dim();
        if pens.g.nrows() + 1 != p || pens.g_b.nrows() + 1 != q || vc.d.nrows() + 1 != q {
            return Err(FlmmError::Inconsistent(format!(
                "dimension mismatch: W has {p} columns, Z has {q}, G is {}, G_b is {}, D is {}",
                pens.g.nrows(),
                pens.g_b.nrows(),
                vc.d.nrows()
            )));
        }
        let d_tilde_b = penalized_random_cov(&vc.d, &pens.g_b, lam.lambda_b)?;
        let mut d_tilde_xi = DMatrix::zeros(q, q);
        d_tilde_xi[(0, 0)] = vc.sigma2_a;
        d_tilde_xi.view_mut((1, 1), (q - 1, q - 1)).copy_from(&d_tilde_b);

        let mut a = pens.g_tilde() * lam.lambda_beta;
        let mut v = Vec::with_capacity(db.n_subjects());
        let mut vinv_w = Vec::with_capacity(db.n_subjects());
        for blk in &db.blocks {
            let mut vi = &blk.z * &d_tilde_xi * blk.z.transpose();
            for j in 0..vi.nrows() {
                vi[(j, j)] += vc.sigma2_eps;
            }
            symmetrize(&mut vi);
            let f = SpdFactor::new(&vi)?;
            let bw = f.solve_mat(&blk.w);
            a += blk.w.transpose() * &bw;
            v.push(f);
            vinv_w.push(bw);
        }
        symmetrize(&mut a);
        let a = SpdFactor::new(&a)?;
        Ok(Self {
            d_tilde_xi,
            v,
            vinv_w,
            a,
            sigma2_eps: vc.sigma2_eps,
        })
    }

    pub fn d_tilde_xi(&self) -> &DMatrix<f64> {
        &self.d_tilde_xi
    }

    /// `D̂_b`: the random-slope block of `D̃_ξ`.
    pub fn d_tilde_b(&self) -> DMatrix<f64> {
        let k = self.d_tilde_xi.nrows() - 1;
        self.d_tilde_xi.view((1, 1), (k, k)).into_owned()
    }

    /// Factor of `A = Σ W_i'Ṽ_i⁻¹W_i + λ_β G̃`.
    pub fn fixed_factor(&self) -> &SpdFactor {
        &self.a
    }

    pub fn v_factor(&self, i: usize) -> &SpdFactor {
        &self.v[i]
    }

    /// `Ṽ_i⁻¹ W_i`.
    pub fn vinv_w(&self, i: usize) -> &DMatrix<f64> {
        &self.vinv_w[i]
    }

    pub fn sigma2_eps(&self) -> f64 {
        self.sigma2_eps
    }

    /// Penalized estimates `(θ̂, ξ̂)` for the responses stored in `db`.
    pub fn estimate(&self, db: &DesignBlocks) -> (DVector<f64>, Vec<DVector<f64>>) {
        let mut rhs = DVector::zeros(db.fixed_dim());
        for (i, blk) in db.blocks.iter().enumerate() {
            rhs += self.vinv_w[i].tr_mul(&blk.y);
        }
        let theta = self.a.solve_vec(&rhs);
        let xi = db
            .blocks
            .iter()
            .enumerate()
            .map(|(i, blk)| {
                let r = &blk.y - &blk.w * &theta;
                &self.d_tilde_xi * blk.z.tr_mul(&self.v[i].solve_vec(&r))
            })
            .collect();
        (theta, xi)
    }

    /// `H_i = Ṽ_i⁻¹ − Ṽ_i⁻¹W_i A⁻¹ W_i'Ṽ_i⁻¹`.
    pub fn h_matrix(&self, i: usize) -> DMatrix<f64> {
        let c = self.a.half_solve_mat(&self.vinv_w[i].transpose());
        let mut h = self.v[i].inverse() - c.tr_mul(&c);
        symmetrize(&mut h);
        h
    }

    /// Penalized restricted log-likelihood
    /// `−½[Σ log|Ṽ_i| + log|A| + Σ r_i'Ṽ_i⁻¹r_i + λ_β θ'G̃θ]`.
    pub fn objective(&self, db: &DesignBlocks, theta: &DVector<f64>, pens: &Penalties, lam: &Lambdas) -> f64 {
        let mut total = self.a.log_det();
        for (i, blk) in db.blocks.iter().enumerate() {
            let r = &blk.y - &blk.w * theta;
            total += self.v[i].log_det() + r.dot(&self.v[i].solve_vec(&r));
        }
        let c = theta.rows(1, theta.len() - 1);
        total += lam.lambda_beta * (c.transpose() * &pens.g * c)[(0, 0)];
        -0.5 * total
    }
}

/// Minimizer `(θ̂, ξ̂)` of the penalized criterion at fixed variance
/// components and smoothing parameters.
pub fn estimate_effects(
    vc: &VarianceComponents,
    db: &DesignBlocks,
    pens: &Penalties,
    lam: &Lambdas,
) -> Result<(DVector<f64>, Vec<DVector<f64>>)> {
    Ok(PenalizedSystem::new(vc, db, pens, lam)?.estimate(db))
}

/// Raw (unprojected) Step-2 updates: `σ_ε²` and the full `D_ξ` matrix.
pub fn em_raw_update(
    state: &EmState,
    sys: &PenalizedSystem,
    db: &DesignBlocks,
    theta: &DVector<f64>,
    xi: &[DVector<f64>],
) -> (f64, DMatrix<f64>) {
    let s2 = state.vc.sigma2_eps;
    let q = db.random_dim();
    let d_xi = state.vc.d_xi();
    let mut eps_terms = Vec::with_capacity(db.n_subjects());
    let mut zhz = DMatrix::<f64>::zeros(q, q);
    let mut xixi = DMatrix::<f64>::zeros(q, q);
    for (i, blk) in db.blocks.iter().enumerate() {
        let resid = &blk.y - &blk.w * theta - &blk.z * &xi[i];
        let h = sys.h_matrix(i);
        let m = blk.y.len() as f64;
        eps_terms.push(resid.norm_squared() + s2 * (m - s2 * h.trace()));
        zhz += blk.z.transpose() * (&h * &blk.z);
        xixi += &xi[i] * xi[i].transpose();
    }
    let n = db.n_subjects() as f64;
    let sigma2_eps = compensated_sum(eps_terms) / db.total_obs() as f64;
    // n⁻¹ Σ {ξ̂ξ̂' + D_ξ − D_ξ Z'HZ D_ξ}; the last term is linear in Σ Z'HZ.
    let mut d_new = (xixi - &d_xi * zhz * &d_xi) / n + d_xi;
    symmetrize(&mut d_new);
    (sigma2_eps, d_new)
}

/// Projects a full `D_ξ` update onto `diag(σ_a², D)`: σ_a² from the (1,1)
/// entry, `D` from the lower block, cross block dropped, `D` symmetrized
/// and its eigenvalues floored at `1e-10·trace`.
pub fn project_components(sigma2_eps: f64, d_xi: &DMatrix<f64>) -> VarianceComponents {
    let k = d_xi.nrows() - 1;
    let mut d = d_xi.view((1, 1), (k, k)).into_owned();
    symmetrize(&mut d);
    let floor = D_EIGEN_FLOOR * d.trace().max(f64::MIN_POSITIVE);
    clip_eigenvalues(&mut d, floor);
    VarianceComponents {
        sigma2_a: d_xi[(0, 0)].max(0.0),
        sigma2_eps: sigma2_eps.max(SIGMA2_EPS_FLOOR),
        d,
    }
}

/// One EM iteration (Step 1 then Step 2).
pub fn em_iterate(state: &EmState, db: &DesignBlocks, pens: &Penalties, lam: &Lambdas) -> Result<EmState> {
    let iteration = state.iteration + 1;
    let sys = PenalizedSystem::new(&state.vc, db, pens, lam)?;
    let (theta, xi) = sys.estimate(db);
    let objective = sys.objective(db, &theta, pens, lam);
    let (sigma2_eps, d_xi) = em_raw_update(state, &sys, db, &theta, &xi);
    if !sigma2_eps.is_finite() || d_xi.iter().any(|v| !v.is_finite()) || theta.iter().any(|v| !v.is_finite()) {
        return Err(FlmmError::NonFinite {
            iteration,
            what: format!("sigma2_eps = {sigma2_eps}, |theta| = {}", theta.norm()),
        });
    }
    Ok(EmState {
        vc: project_components(sigma2_eps, &d_xi),
        theta,
        xi,
        iteration,
        objective,
    })
}

/// Normwise relative change of the variance components and of `θ`,
/// whichever is larger.
pub fn relative_change(old: &EmState, new: &EmState) -> f64 {
    let scale_vc = old.vc.flat().fold(0.0_f64, |a, v| a.max(v.abs()));
    let dvc = old.vc.flat().zip(new.vc.flat()).fold(0.0_f64, |a, (o, n)| a.max((n - o).abs()));
    let scale_th = old.theta.amax().max(f64::MIN_POSITIVE);
    let dth = (&new.theta - &old.theta).amax();
    (dvc / scale_vc).max(dth / scale_th)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub iterations: usize,
    pub final_delta: f64,
    pub converged: bool,
    /// Penalized restricted log-likelihood per iteration.
    pub objective_history: Vec<f64>,
}

impl Convergence {
    /// Whether the logged objective never decreased by more than `slack`
    /// (relative).
    pub fn objective_monotone(&self, slack: f64) -> bool {
        self.objective_history
            .windows(2)
            .all(|w| w[1] >= w[0] - slack * w[0].abs().max(1.0))
    }
}

/// Complete estimate: effects, variance components, smoothing parameters,
/// GCV diagnostics and the covariance of `θ̂`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub schema_version: u32,
    pub beta_basis: BasisDescriptor,
    pub b_basis: BasisDescriptor,
    pub beta_penalty: String,
    pub b_penalty: String,
    pub penalty_quadrature: String,
    pub subject_ids: Vec<String>,
    #[serde(with = "serde_mat::vector")]
    pub theta: DVector<f64>,
    #[serde(with = "serde_mat::vectors")]
    pub xi: Vec<DVector<f64>>,
    pub vc: VarianceComponents,
    pub lambdas: Lambdas,
    pub n_obs: usize,
    pub sse: f64,
    pub df: f64,
    pub gcv: f64,
    pub cov_form: String,
    #[serde(with = "serde_mat::matrix")]
    pub cov_theta: DMatrix<f64>,
    /// `D̂_b = (0, I)(D̂_ξ⁻¹ + λ_b G_ξ)⁻¹(0, I)'`.
    #[serde(with = "serde_mat::matrix")]
    pub d_b_penalized: DMatrix<f64>,
    pub convergence: Convergence,
}

impl FitResult {
    pub fn intercept(&self) -> f64 {
        self.theta[0]
    }

    /// `ĉ`, the population slope coefficients.
    pub fn beta_coefficients(&self) -> DVector<f64> {
        self.theta.rows(1, self.theta.len() - 1).into_owned()
    }

    pub fn penalties(&self) -> Result<Penalties> {
        Penalties::from_specs(
            &self.beta_basis,
            &self.beta_penalty,
            &self.b_basis,
            &self.b_penalty,
            &self.penalty_quadrature,
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("FitResult serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| FlmmError::InvalidArgument(format!("fit JSON: {e}")))
    }
}

/// Assembles a [`FitResult`] at fixed variance components: re-estimates the
/// effects so that everything stored refers to the same `vc`.
pub fn finalize_fit(
    vc: VarianceComponents,
    db: &DesignBlocks,
    pens: &Penalties,
    lam: &Lambdas,
    convergence: Convergence,
) -> Result<FitResult> {
    let sys = PenalizedSystem::new(&vc, db, pens, lam)?;
    let (theta, xi) = sys.estimate(db);
    let sse = crate::selection::sum_squared_errors(db, &theta, &xi);
    let df = crate::selection::effective_df_from_system(&sys, db);
    let gcv = crate::selection::gcv_value(sse, db.total_obs(), df);
    let cov_theta = crate::inference::simplified_cov(&sys);
    Ok(FitResult {
        schema_version: FIT_SCHEMA_VERSION,
        beta_basis: pens.beta_basis.clone(),
        b_basis: pens.b_basis.clone(),
        beta_penalty: pens.beta_op.clone(),
        b_penalty: pens.b_op.clone(),
        penalty_quadrature: pens.quadrature.clone(),
        subject_ids: db.blocks.iter().map(|b| b.id.clone()).collect(),
        theta,
        xi,
        d_b_penalized: sys.d_tilde_b(),
        vc,
        lambdas: *lam,
        n_obs: db.total_obs(),
        sse,
        df,
        gcv,
        cov_form: "simplified".to_string(),
        cov_theta,
        convergence,
    })
}

/// Iterates [`em_iterate`] until the relative change drops below `tol` or
/// `max_iter` is reached. Non-convergence is reported in the result, not as
/// an error.
pub fn run_em(db: &DesignBlocks, pens: &Penalties, lam: &Lambdas, cfg: &EmConfig) -> Result<FitResult> {
    let mut state = init_state(cfg, db)?;
    let mut history = Vec::new();
    let mut delta = f64::INFINITY;
    let mut converged = false;
    while state.iteration < cfg.max_iter {
        let next = em_iterate(&state, db, pens, lam)?;
        history.push(next.objective);
        delta = relative_change(&state, &next);
        state = next;
        if delta < cfg.tol {
            converged = true;
            break;
        }
    }
    let convergence = Convergence {
        iterations: state.iteration,
        final_delta: delta,
        converged,
        objective_history: history,
    };
    finalize_fit(state.vc, db, pens, lam, convergence)
}

/// Slope functions evaluated on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SlopeFunctions {
    pub grid: Vec<f64>,
    /// `β̂(t) = φ'(t) ĉ`.
    pub beta: Vec<f64>,
    /// `b̂_i(t) = ψ'(t) b̂_i`, one curve per subject.
    pub b: Vec<Vec<f64>>,
    /// `β̂_i(t) = β̂(t) + b̂_i(t)`.
    pub beta_i: Vec<Vec<f64>>,
}

pub fn coefficients_to_functions(fit: &FitResult, grid: &[f64]) -> Result<SlopeFunctions> {
    let phi = fit.beta_basis.build()?.eval(grid, 0)?;
    let psi = fit.b_basis.build()?.eval(grid, 0)?;
    let beta: Vec<f64> = (&phi * fit.beta_coefficients()).iter().copied().collect();
    let mut b = Vec::with_capacity(fit.xi.len());
    let mut beta_i = Vec::with_capacity(fit.xi.len());
    for xi in &fit.xi {
        let coef = xi.rows(1, xi.len() - 1);
        let bi: Vec<f64> = (&psi * coef).iter().copied().collect();
        beta_i.push(beta.iter().zip(&bi).map(|(a, c)| a + c).collect());
        b.push(bi);
    }
    Ok(SlopeFunctions {
        grid: grid.to_vec(),
        beta,
        b,
        beta_i,
    })
}
