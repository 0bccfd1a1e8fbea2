use std::fmt::Debug;
use std::sync::OnceLock;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{Basis, Interval};
use crate::error::{invalid, FlmmError, Result};
use crate::quadrature::QuadratureRule;
use crate::registry::{arg, expect_arity, Registry};

/// A linear differential operator with constant coefficients,
/// `L f = Σ c_k f^(k)`, whose squared integral defines a roughness penalty.
pub trait RoughnessOperator: Send + Sync + Debug {
    /// Spec string that rebuilds the operator through [`roughness_registry`].
    fn spec(&self) -> String;

    /// `(derivative order, coefficient)` pairs.
    fn terms(&self) -> Vec<(usize, f64)>;

    fn order(&self) -> usize {
        self.terms().iter().map(|(k, _)| *k).max().unwrap_or(0)
    }
}

/// `L f = f^(m)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Derivative(pub usize);

/// Harmonic acceleration `L f = f''' + ω² f'`; annihilates
/// `1, sin(ωt), cos(ωt)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Harmonic {
    pub omega: f64,
}

impl RoughnessOperator for Derivative {
    fn spec(&self) -> String {
        format!("d{}", self.0)
    }

    fn terms(&self) -> Vec<(usize, f64)> {
        vec![(self.0, 1.0)]
    }
}

impl RoughnessOperator for Harmonic {
    fn spec(&self) -> String {
        format!("harmonic:{}", self.omega)
    }

    fn terms(&self) -> Vec<(usize, f64)> {
        vec![(1, self.omega * self.omega), (3, 1.0)]
    }
}

/// Roughness operators by name. The context is the domain, which supplies
/// the default `ω = 2π/width` for `harmonic` without an argument.
///
/// * `d1`, `d2`, `d3`, or `deriv:<m>`
/// * `harmonic[:<omega>]`
pub fn roughness_registry() -> &'static Registry<dyn RoughnessOperator, Interval> {
    static REG: OnceLock<Registry<dyn RoughnessOperator, Interval>> = OnceLock::new();
    REG.get_or_init(|| {
        let mut r: Registry<dyn RoughnessOperator, Interval> = Registry::new("penalty");
        for (name, m) in [("d1", 1usize), ("d2", 2), ("d3", 3)] {
            r.register(name, "d<order>", move |args, _| {
                expect_arity(args, 0, 0)?;
                Ok(Box::new(Derivative(m)) as Box<dyn RoughnessOperator>)
            });
        }
        r.register("deriv", "deriv:<order>", |args, _| {
            expect_arity(args, 1, 1)?;
            let m: usize = arg(args, 0, "derivative order")?;
            if m == 0 {
                return invalid("derivative order must be at least 1");
            }
            Ok(Box::new(Derivative(m)) as Box<dyn RoughnessOperator>)
        });
        r.register("harmonic", "harmonic[:<omega>]", |args, domain: &Interval| {
            expect_arity(args, 0, 1)?;
            let omega = if args.is_empty() {
                2.0 * std::f64::consts::PI / domain.width()
            } else {
                arg(args, 0, "omega")?
            };
            if !(omega.is_finite() && omega > 0.0) {
                return invalid("omega must be positive");
            }
            Ok(Box::new(Harmonic { omega }) as Box<dyn RoughnessOperator>)
        });
        r
    })
}

/// `∫ (Lφ_j)(Lφ_k) dt` for all pairs of basis functions.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyMatrix {
    pub entries: DMatrix<f64>,
    pub operator: String,
}

impl PenaltyMatrix {
    pub fn quadratic_form(&self, c: &[f64]) -> f64 {
        let v = nalgebra::DVector::from_column_slice(c);
        (v.transpose() * &self.entries * &v)[(0, 0)]
    }
}

pub fn penalty_matrix(
    basis: &dyn Basis,
    op: &dyn RoughnessOperator,
    quad: &dyn QuadratureRule,
) -> Result<PenaltyMatrix> {
    let order = op.order();
    if order > basis.max_derivative() {
        return Err(FlmmError::DerivativeOrder {
            basis: basis.kind().to_string(),
            requested: order,
            max: basis.max_derivative(),
        });
    }
    let (nodes, weights) = quad.composite(&basis.breakpoints());
    let k = basis.size();
    let mut applied = DMatrix::<f64>::zeros(nodes.len(), k);
    for (deriv, coef) in op.terms() {
        applied += basis.eval(&nodes, deriv)? * coef;
    }
    let mut g = DMatrix::<f64>::zeros(k, k);
    for a in 0..k {
        for b in a..k {
            let mut s = 0.0;
            for (q, w) in weights.iter().enumerate() {
                s += w * applied[(q, a)] * applied[(q, b)];
            }
            g[(a, b)] = s;
            g[(b, a)] = s;
        }
    }
    Ok(PenaltyMatrix {
        entries: g,
        operator: op.spec(),
    })
}
