use std::f64::consts::{FRAC_PI_2, PI};

use super::{Basis, BasisDescriptor, Interval};
use crate::error::{invalid, Result};

/// Fourier basis `1, sin(ωt), cos(ωt), sin(2ωt), cos(2ωt), ...` with
/// `ω = 2π/period`, normalized to unit L2 norm over one period.
#[derive(Debug, Clone)]
pub struct FourierBasis {
    domain: Interval,
    n_basis: usize,
    period: f64,
    omega: f64,
}

impl FourierBasis {
    pub fn new(domain: Interval, n_basis: usize, period: f64) -> Result<Self> {
        if n_basis % 2 == 0 {
            return invalid(format!("Fourier basis size must be odd, got {n_basis}"));
        }
        if !(period.is_finite() && period > 0.0) {
            return invalid(format!("Fourier period must be positive, got {period}"));
        }
        Ok(Self {
            domain,
            n_basis,
            period,
            omega: 2.0 * PI / period,
        })
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn period(&self) -> f64 {
        self.period
    }
}

impl Basis for FourierBasis {
    fn kind(&self) -> &'static str {
        "fourier"
    }

    fn domain(&self) -> Interval {
        self.domain
    }

    fn size(&self) -> usize {
        self.n_basis
    }

    fn max_derivative(&self) -> usize {
        usize::MAX
    }

    /// Uniform pieces, 4·n_basis per period, so that each piece spans at
    /// most a quarter oscillation of the fastest product of two functions.
    fn breakpoints(&self) -> Vec<f64> {
        let per_period = 4 * self.n_basis.max(2);
        let pieces = ((self.domain.width() / self.period) * per_period as f64).ceil().max(1.0) as usize;
        self.domain.grid(pieces + 1)
    }

    fn eval_point(&self, t: f64, deriv: usize, out: &mut [f64]) {
        let amp = (2.0 / self.period).sqrt();
        out[0] = if deriv == 0 { 1.0 / self.period.sqrt() } else { 0.0 };
        let shift = deriv as f64 * FRAC_PI_2;
        for k in 1..=(self.n_basis - 1) / 2 {
            let w = k as f64 * self.omega;
            let scale = amp * w.powi(deriv as i32);
            let phase = w * t + shift;
            out[2 * k - 1] = scale * phase.sin();
            out[2 * k] = scale * phase.cos();
        }
    }

    fn descriptor(&self) -> BasisDescriptor {
        BasisDescriptor::Fourier {
            domain: self.domain,
            n_basis: self.n_basis,
            period: self.period,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::trapezoid;
    use approx::assert_relative_eq;

    #[test]
    fn rejects_even_size_and_bad_period() {
        let d = Interval::new(0.0, 1.0).unwrap();
        assert!(FourierBasis::new(d, 4, 1.0).is_err());
        assert!(FourierBasis::new(d, 5, 0.0).is_err());
        assert_eq!(FourierBasis::new(d, 1, 1.0).unwrap().size(), 1);
        let weather = FourierBasis::new(Interval::new(0.0, 365.0).unwrap(), 35, 365.0).unwrap();
        assert_eq!(weather.size(), 35);
    }

    #[test]
    fn values_at_zero() {
        let b = FourierBasis::new(Interval::new(0.0, 1.0).unwrap(), 5, 1.0).unwrap();
        let mut out = vec![0.0; 5];
        b.eval_point(0.0, 0, &mut out);
        let r2 = 2f64.sqrt();
        assert_relative_eq!(out[0], 1.0);
        assert_relative_eq!(out[1], 0.0);
        assert_relative_eq!(out[2], r2);
        assert_relative_eq!(out[3], 0.0);
        assert_relative_eq!(out[4], r2);
    }

    #[test]
    fn second_derivative_of_sine_column() {
        let b = FourierBasis::new(Interval::new(0.0, 2.0).unwrap(), 7, 2.0).unwrap();
        let grid = b.domain().grid(50);
        let f = b.eval(&grid, 0).unwrap();
        let f2 = b.eval(&grid, 2).unwrap();
        let w = b.omega();
        for i in 0..grid.len() {
            assert_relative_eq!(f2[(i, 1)], -w * w * f[(i, 1)], epsilon = 1e-12);
            assert_relative_eq!(f2[(i, 4)], -4.0 * w * w * f[(i, 4)], epsilon = 1e-10);
        }
    }

    #[test]
    fn orthonormal_over_a_period() {
        let b = FourierBasis::new(Interval::new(0.0, 3.0).unwrap(), 9, 3.0).unwrap();
        let grid = b.domain().grid(4001);
        let m = b.eval(&grid, 0).unwrap();
        for j in 0..9 {
            for k in 0..9 {
                let prod: Vec<f64> = (0..grid.len()).map(|i| m[(i, j)] * m[(i, k)]).collect();
                let v = trapezoid(&grid, &prod);
                assert_relative_eq!(v, if j == k { 1.0 } else { 0.0 }, epsilon = 1e-9);
            }
        }
    }
}
