//! Covariance of `θ̂`, the intercept interval, pointwise bands for `β̂(t)`
//! and the random-slope covariance surface `γ̂(s, t)`.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::design::DesignBlocks;
use crate::em::{FitResult, PenalizedSystem};
use crate::error::{invalid, Result};
use crate::linalg::symmetrize;
use crate::registry::{expect_arity, Registry};

/// A way of estimating `Cov(θ̂)` from the penalized system of a fit.
pub trait CovarianceForm: Send + Sync + std::fmt::Debug {
    fn name(&self) -> &'static str;
    fn covariance(&self, sys: &PenalizedSystem, db: &DesignBlocks) -> DMatrix<f64>;
}

/// `A⁻¹` with `A = Σ W_i'Ṽ_i⁻¹W_i + λ_β G̃`.
#[derive(Debug, Clone, Copy)]
pub struct Simplified;

/// `A⁻¹ (Σ W_i'Ṽ_i⁻¹W_i) A⁻¹`, taking `Cov(Y_i) = Ṽ_i`.
#[derive(Debug, Clone, Copy)]
pub struct Sandwich;

impl CovarianceForm for Simplified {
    fn name(&self) -> &'static str {
        "simplified"
    }

    fn covariance(&self, sys: &PenalizedSystem, _db: &DesignBlocks) -> DMatrix<f64> {
        simplified_cov(sys)
    }
}

impl CovarianceForm for Sandwich {
    fn name(&self) -> &'static str {
        "sandwich"
    }

    fn covariance(&self, sys: &PenalizedSystem, db: &DesignBlocks) -> DMatrix<f64> {
        let p = db.fixed_dim();
        let mut meat = DMatrix::zeros(p, p);
        for (i, b) in db.blocks.iter().enumerate() {
            meat += b.w.transpose() * sys.vinv_w(i);
        }
        let a_inv = simplified_cov(sys);
        let mut c = &a_inv * meat * &a_inv;
        symmetrize(&mut c);
        c
    }
}

pub fn simplified_cov(sys: &PenalizedSystem) -> DMatrix<f64> {
    sys.fixed_factor().inverse()
}

/// `simplified` or `sandwich`.
pub fn covariance_registry() -> &'static Registry<dyn CovarianceForm> {
    static REG: OnceLock<Registry<dyn CovarianceForm>> = OnceLock::new();
    REG.get_or_init(|| {
        let mut r: Registry<dyn CovarianceForm> = Registry::new("covariance form");
        r.register("simplified", "simplified", |args, _| {
            expect_arity(args, 0, 0)?;
            Ok(Box::new(Simplified) as Box<dyn CovarianceForm>)
        });
        r.register("sandwich", "sandwich", |args, _| {
            expect_arity(args, 0, 0)?;
            Ok(Box::new(Sandwich) as Box<dyn CovarianceForm>)
        });
        r
    })
}

/// `Cov(θ̂)` for a fit under the given form, rebuilt from the design.
pub fn cov_theta(db: &DesignBlocks, fit: &FitResult, form: &dyn CovarianceForm) -> Result<DMatrix<f64>> {
    let pens = fit.penalties()?;
    let sys = PenalizedSystem::new(&fit.vc, db, &pens, &fit.lambdas)?;
    Ok(form.covariance(&sys, db))
}

/// Replaces the stored covariance of a fit.
pub fn with_covariance(db: &DesignBlocks, mut fit: FitResult, form: &dyn CovarianceForm) -> Result<FitResult> {
    fit.cov_theta = cov_theta(db, &fit, form)?;
    fit.cov_form = form.name().to_string();
    Ok(fit)
}

/// Two-sided standard-normal critical value for coverage `level`.
pub fn z_quantile(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return invalid(format!("confidence level must lie in (0, 1), got {level}"));
    }
    let normal = Normal::standard();
    Ok(normal.inverse_cdf(0.5 + level / 2.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub estimate: f64,
    pub std_error: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
}

/// `α̂₀ ± z·σ̂₁₁` from an estimate and its standard error.
pub fn interval_from(estimate: f64, std_error: f64, level: f64) -> Result<ConfidenceInterval> {
    if !(std_error >= 0.0) {
        return invalid(format!("standard error must be nonnegative, got {std_error}"));
    }
    let z = z_quantile(level)?;
    Ok(ConfidenceInterval {
        estimate,
        std_error,
        lower: estimate - z * std_error,
        upper: estimate + z * std_error,
        level,
    })
}

pub fn intercept_ci(fit: &FitResult, level: f64) -> Result<ConfidenceInterval> {
    interval_from(fit.theta[0], fit.cov_theta[(0, 0)].max(0.0).sqrt(), level)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointwiseBand {
    pub grid: Vec<f64>,
    pub center: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub level: f64,
}

/// `β̂(t) ± z·sqrt(φ'(t) Σ̂₂₂ φ(t))` on `grid`.
pub fn beta_band(fit: &FitResult, grid: &[f64], level: f64) -> Result<PointwiseBand> {
    let z = z_quantile(level)?;
    let phi = fit.beta_basis.build()?.eval(grid, 0)?;
    let j = phi.ncols();
    let s22 = fit.cov_theta.view((1, 1), (j, j));
    let c = fit.beta_coefficients();
    let mut center = Vec::with_capacity(grid.len());
    let mut lower = Vec::with_capacity(grid.len());
    let mut upper = Vec::with_capacity(grid.len());
    for r in 0..grid.len() {
        let row = phi.row(r);
        let est = row.dot(&c.transpose());
        let var = (row * s22 * row.transpose())[(0, 0)].max(0.0);
        let half = z * var.sqrt();
        center.push(est);
        lower.push(est - half);
        upper.push(est + half);
    }
    Ok(PointwiseBand {
        grid: grid.to_vec(),
        center,
        lower,
        upper,
        level,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovSurface {
    pub s: Vec<f64>,
    pub t: Vec<f64>,
    #[serde(with = "crate::serde_mat::matrix")]
    pub values: DMatrix<f64>,
}

impl CovSurface {
    pub fn diagonal(&self) -> DVector<f64> {
        self.values.diagonal()
    }
}

/// `γ̂(s, t) = ψ'(s) D̂_b ψ(t)` with the penalized `D̂_b` stored in the fit.
pub fn gamma_surface(fit: &FitResult, grid: &[f64]) -> Result<CovSurface> {
    let psi = fit.b_basis.build()?.eval(grid, 0)?;
    let mut values = &psi * &fit.d_b_penalized * psi.transpose();
    symmetrize(&mut values);
    Ok(CovSurface {
        s: grid.to_vec(),
        t: grid.to_vec(),
        values,
    })
}
