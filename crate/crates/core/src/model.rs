//! Spec strings for a complete model: bases, penalties and quadrature.

use serde::{Deserialize, Serialize};

use crate::basis::{self, roughness_registry, BasisSystem, Interval};
use crate::design::{build_design, Dataset, DesignBlocks};
use crate::em::Penalties;
use crate::error::Result;
use crate::quadrature::{self, QuadratureRule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub beta_basis: String,
    pub b_basis: String,
    pub beta_penalty: String,
    pub b_penalty: String,
    /// Rule for the design integrals `∫φ X`.
    pub quadrature: String,
    /// Rule for the penalty integrals `∫(Lφ)(Lφ)`.
    pub penalty_quadrature: String,
}

impl Default for ModelSpec {
    /// 35 cubic B-splines for both slopes with second-derivative penalties.
    fn default() -> Self {
        Self::same("bspline:4:31", "d2")
    }
}

impl ModelSpec {
    /// The same basis and penalty for `β` and `b_i`.
    pub fn same(basis: &str, penalty: &str) -> Self {
        Self {
            beta_basis: basis.to_string(),
            b_basis: basis.to_string(),
            beta_penalty: penalty.to_string(),
            b_penalty: penalty.to_string(),
            quadrature: "trapezoid".to_string(),
            penalty_quadrature: "gauss:7".to_string(),
        }
    }

    pub fn build(&self, domain: Interval) -> Result<Model> {
        let beta_basis = basis::from_spec(&self.beta_basis, domain)?;
        let b_basis = basis::from_spec(&self.b_basis, domain)?;
        let ops = roughness_registry();
        let beta_op = ops.build(&self.beta_penalty, &domain)?;
        let b_op = ops.build(&self.b_penalty, &domain)?;
        let quads = quadrature::registry();
        let pen_quad = quads.build(&self.penalty_quadrature, &())?;
        let penalties = Penalties::build(
            beta_basis.as_ref(),
            beta_op.as_ref(),
            b_basis.as_ref(),
            b_op.as_ref(),
            pen_quad.as_ref(),
        )?;
        Ok(Model {
            beta_basis,
            b_basis,
            penalties,
            quadrature: quads.build(&self.quadrature, &())?,
        })
    }
}

/// Built bases, penalty matrices and design quadrature.
#[derive(Debug)]
pub struct Model {
    pub beta_basis: BasisSystem,
    pub b_basis: BasisSystem,
    pub penalties: Penalties,
    pub quadrature: Box<dyn QuadratureRule>,
}

impl Model {
    pub fn design(&self, d: &Dataset) -> Result<DesignBlocks> {
        build_design(d, self.beta_basis.as_ref(), self.b_basis.as_ref(), self.quadrature.as_ref())
    }
}
