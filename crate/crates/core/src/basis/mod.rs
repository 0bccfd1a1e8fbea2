//! Basis-function systems over a closed interval and the roughness
//! penalties built on them.

mod bspline;
mod fourier;
mod penalty;

use std::fmt::Debug;
use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, FlmmError, Result};
use crate::registry::{arg, expect_arity, Registry};

pub use bspline::BSplineBasis;
pub use fourier::FourierBasis;
pub use penalty::{
    penalty_matrix, roughness_registry, Derivative, Harmonic, PenaltyMatrix, RoughnessOperator,
};

/// Highest derivative order `eval` accepts.
pub const MAX_DERIV: usize = 3;

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(FlmmError::DegenerateDomain { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// Membership with a relative slack of 1e-12 of the width.
    pub fn contains(&self, t: f64) -> bool {
        let eps = 1e-12 * self.width();
        t >= self.lo - eps && t <= self.hi + eps
    }

    pub fn clamp(&self, t: f64) -> f64 {
        t.clamp(self.lo, self.hi)
    }

    /// `n` equispaced points including both ends.
    pub fn grid(&self, n: usize) -> Vec<f64> {
        match n {
            0 => Vec::new(),
            1 => vec![self.lo],
            _ => {
                let h = self.width() / (n - 1) as f64;
                let mut g: Vec<f64> = (0..n).map(|i| self.lo + i as f64 * h).collect();
                g[n - 1] = self.hi;
                g
            }
        }
    }
}

/// An evaluable family of basis functions on a domain.
pub trait Basis: Send + Sync + Debug {
    fn kind(&self) -> &'static str;

    fn domain(&self) -> Interval;

    fn size(&self) -> usize;

    /// Highest derivative order that is square integrable and not
    /// identically zero.
    fn max_derivative(&self) -> usize;

    /// Points where the basis may lose smoothness, including the domain
    /// ends; composite quadrature is split there.
    fn breakpoints(&self) -> Vec<f64>;

    /// Writes the `deriv`-th derivative of every basis function at `t`
    /// into `out` (length `size()`); `t` must already be in the domain.
    fn eval_point(&self, t: f64, deriv: usize, out: &mut [f64]);

    fn descriptor(&self) -> BasisDescriptor;

    /// `|t| × size` matrix of `deriv`-th derivatives.
    fn eval(&self, t: &[f64], deriv: usize) -> Result<DMatrix<f64>> {
        if deriv > MAX_DERIV {
            return invalid(format!("derivative order {deriv} not supported (max {MAX_DERIV})"));
        }
        let d = self.domain();
        let k = self.size();
        let mut m = DMatrix::<f64>::zeros(t.len(), k);
        let mut row = vec![0.0; k];
        for (i, &ti) in t.iter().enumerate() {
            if !d.contains(ti) {
                return Err(FlmmError::OutsideDomain { t: ti, lo: d.lo, hi: d.hi });
            }
            self.eval_point(d.clamp(ti), deriv, &mut row);
            for (j, v) in row.iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        Ok(m)
    }
}

/// Shared handle to an immutable basis.
pub type BasisSystem = Arc<dyn Basis>;

/// Serializable description of a basis; rebuilding from it reproduces the
/// basis bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BasisDescriptor {
    Bspline {
        domain: Interval,
        order: usize,
        interior_knots: Vec<f64>,
    },
    /// Functions ordered `1, sin(ωt), cos(ωt), sin(2ωt), ...` with
    /// `ω = 2π/period`, each scaled to unit L2 norm over one period.
    Fourier {
        domain: Interval,
        n_basis: usize,
        period: f64,
    },
}

impl BasisDescriptor {
    pub fn build(&self) -> Result<BasisSystem> {
        Ok(match self {
            BasisDescriptor::Bspline {
                domain,
                order,
                interior_knots,
            } => Arc::new(BSplineBasis::with_knots(*domain, *order, interior_knots.clone())?),
            BasisDescriptor::Fourier {
                domain,
                n_basis,
                period,
            } => Arc::new(FourierBasis::new(*domain, *n_basis, *period)?),
        })
    }
}

/// Equispaced clamped B-spline basis of the given order.
pub fn make_bspline_basis(domain: Interval, order: usize, n_interior: usize) -> Result<BasisSystem> {
    Ok(Arc::new(BSplineBasis::equispaced(domain, order, n_interior)?))
}

pub fn make_fourier_basis(domain: Interval, n_basis: usize, period: f64) -> Result<BasisSystem> {
    Ok(Arc::new(FourierBasis::new(domain, n_basis, period)?))
}

pub fn eval_basis(b: &dyn Basis, t: &[f64], deriv: usize) -> Result<DMatrix<f64>> {
    b.eval(t, deriv)
}

/// Basis families selectable by spec string, built on a given domain.
///
/// * `bspline:<order>:<n_interior_knots>`
/// * `fourier:<n_basis>[:<period>]` (period defaults to the domain width)
pub fn registry() -> &'static Registry<dyn Basis, Interval> {
    static REG: OnceLock<Registry<dyn Basis, Interval>> = OnceLock::new();
    REG.get_or_init(|| {
        let mut r = Registry::new("basis");
        r.register("bspline", "bspline:<order>:<n_interior_knots>", |args, domain| {
            expect_arity(args, 2, 2)?;
            let b = BSplineBasis::equispaced(*domain, arg(args, 0, "order")?, arg(args, 1, "knot count")?)?;
            Ok(Box::new(b) as Box<dyn Basis>)
        });
        r.register("fourier", "fourier:<n_basis>[:<period>]", |args, domain: &Interval| {
            expect_arity(args, 1, 2)?;
            let period = if args.len() == 2 { arg(args, 1, "period")? } else { domain.width() };
            Ok(Box::new(FourierBasis::new(*domain, arg(args, 0, "n_basis")?, period)?) as Box<dyn Basis>)
        });
        r
    })
}

/// Builds a shared basis from a spec string such as `bspline:4:26`.
pub fn from_spec(spec: &str, domain: Interval) -> Result<BasisSystem> {
    Ok(Arc::from(registry().build(spec, &domain)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn interval_validation() {
        assert!(Interval::new(1.0, 1.0).is_err());
        assert!(Interval::new(0.0, f64::NAN).is_err());
        let d = Interval::new(0.0, 2.0).unwrap();
        assert_eq!(d.grid(3), vec![0.0, 1.0, 2.0]);
        assert!(d.contains(2.0) && !d.contains(2.1));
    }

    #[test]
    fn registry_specs() {
        let d = Interval::new(0.0, 23.0).unwrap();
        assert_eq!(from_spec("bspline:4:26", d).unwrap().size(), 30);
        let f = from_spec("fourier:5", d).unwrap();
        match f.descriptor() {
            BasisDescriptor::Fourier { period, .. } => assert_eq!(period, 23.0),
            _ => unreachable!(),
        }
        assert!(from_spec("fourier:4", d).is_err());
        assert!(from_spec("wavelet:3", d).is_err());
    }

    #[test]
    fn eval_rejects_outside_points_and_high_derivatives() {
        let b = from_spec("bspline:4:3", Interval::new(0.0, 1.0).unwrap()).unwrap();
        assert!(matches!(b.eval(&[1.5], 0), Err(FlmmError::OutsideDomain { .. })));
        assert!(b.eval(&[0.5], 4).is_err());
    }

    proptest! {
        #[test]
        fn descriptor_json_round_trip_is_exact(
            lo in -10.0f64..10.0,
            width in 0.1f64..50.0,
            order in 2usize..6,
            knots in 0usize..12,
            fourier in any::<bool>(),
        ) {
            let d = Interval::new(lo, lo + width).unwrap();
            let b = if fourier {
                make_fourier_basis(d, 2 * knots + 1, width * 1.5).unwrap()
            } else {
                make_bspline_basis(d, order, knots).unwrap()
            };
            let desc = b.descriptor();
            let json = serde_json::to_string(&desc).unwrap();
            let back: BasisDescriptor = serde_json::from_str(&json).unwrap();
            prop_assert_eq!(&back, &desc);
            let rebuilt = back.build().unwrap();
            let grid = d.grid(17);
            prop_assert_eq!(rebuilt.eval(&grid, 1).unwrap(), b.eval(&grid, 1).unwrap());
        }
    }
}
