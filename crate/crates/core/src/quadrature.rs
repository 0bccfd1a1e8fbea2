//! Quadrature rules used for basis inner products and penalty integrals.

use std::fmt::Debug;
use std::sync::OnceLock;

use nalgebra::DVector;

use crate::basis::Basis;
use crate::design::FunctionalSample;
use crate::error::{invalid, FlmmError, Result};
use crate::registry::{arg, expect_arity, Registry};

/// A rule for integrating against basis functions.
pub trait QuadratureRule: Send + Sync + Debug {
    /// Spec string that rebuilds this rule through [`registry`].
    fn spec(&self) -> String;

    /// Nodes and weights of a composite rule on the pieces delimited by
    /// `breaks` (sorted, at least two entries).
    fn composite(&self, breaks: &[f64]) -> (Vec<f64>, Vec<f64>);

    /// Approximates `∫ φ_j(t) x(t) dt` for every basis function.
    fn inner_product(&self, basis: &dyn Basis, sample: &FunctionalSample) -> Result<DVector<f64>>;
}

/// Trapezoid rule on the grid a curve was observed on.
///
/// When asked for a composite rule on arbitrary breaks (penalty integrals),
/// each piece is split into `panels` equal trapezoid panels.
#[derive(Debug, Clone, PartialEq)]
pub struct Trapezoid {
    pub panels: usize,
}

impl Default for Trapezoid {
    fn default() -> Self {
        Self { panels: 256 }
    }
}

/// Composite Gauss–Legendre with `n_nodes` per piece.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendre {
    pub n_nodes: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n_nodes: usize) -> Result<Self> {
        if n_nodes == 0 || n_nodes > 64 {
            return invalid(format!("gauss rule needs 1..=64 nodes, got {n_nodes}"));
        }
        let (nodes, weights) = gauss_legendre_unit(n_nodes);
        Ok(Self {
            n_nodes,
            nodes,
            weights,
        })
    }

    /// Nodes and weights on `[-1, 1]`.
    pub fn unit_rule(&self) -> (&[f64], &[f64]) {
        (&self.nodes, &self.weights)
    }
}

/// Gauss–Legendre nodes and weights on [-1, 1] by Newton iteration on P_n.
pub fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0_f64, 0.0_f64);
            for k in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * k + 1) as f64 * z * p1 - k as f64 * p2) / (k + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Trapezoid weights for a sorted grid.
pub fn trapezoid_weights(t: &[f64]) -> Vec<f64> {
    let n = t.len();
    let mut w = vec![0.0; n];
    for k in 1..n {
        let h = 0.5 * (t[k] - t[k - 1]);
        w[k - 1] += h;
        w[k] += h;
    }
    w
}

/// Trapezoid integral of sampled values.
pub fn trapezoid(t: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(t.len(), y.len());
    t.windows(2)
        .zip(y.windows(2))
        .map(|(tw, yw)| 0.5 * (tw[1] - tw[0]) * (yw[0] + yw[1]))
        .sum()
}

/// Piecewise-linear interpolation of `(t, x)` at `at`, clamped at the ends.
pub fn interpolate_linear(t: &[f64], x: &[f64], at: f64) -> f64 {
    let n = t.len();
    if at <= t[0] {
        return x[0];
    }
    if at >= t[n - 1] {
        return x[n - 1];
    }
    let k = t.partition_point(|&v| v <= at).clamp(1, n - 1);
    let (t0, t1) = (t[k - 1], t[k]);
    let w = (at - t0) / (t1 - t0);
    x[k - 1] * (1.0 - w) + x[k] * w
}

fn check_sample_in_domain(basis: &dyn Basis, s: &FunctionalSample) -> Result<()> {
    let d = basis.domain();
    for &t in [s.t.first(), s.t.last()].into_iter().flatten() {
        if !d.contains(t) {
            return Err(FlmmError::OutsideDomain { t, lo: d.lo, hi: d.hi });
        }
    }
    if s.t.len() < 2 {
        return invalid("sample grid needs at least two points");
    }
    Ok(())
}

impl QuadratureRule for Trapezoid {
    fn spec(&self) -> String {
        "trapezoid".to_string()
    }

    fn composite(&self, breaks: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut grid = Vec::with_capacity((breaks.len() - 1) * self.panels + 1);
        for w in breaks.windows(2) {
            let h = (w[1] - w[0]) / self.panels as f64;
            for p in 0..self.panels {
                grid.push(w[0] + p as f64 * h);
            }
        }
        grid.push(*breaks.last().unwrap());
        let weights = trapezoid_weights(&grid);
        (grid, weights)
    }

    fn inner_product(&self, basis: &dyn Basis, s: &FunctionalSample) -> Result<DVector<f64>> {
        check_sample_in_domain(basis, s)?;
        let values = basis.eval(&s.t, 0)?;
        let w = trapezoid_weights(&s.t);
        let weighted: Vec<f64> = w.iter().zip(&s.x).map(|(a, b)| a * b).collect();
        Ok(values.tr_mul(&DVector::from_vec(weighted)))
    }
}

impl QuadratureRule for GaussLegendre {
    fn spec(&self) -> String {
        format!("gauss:{}", self.n_nodes)
    }

    fn composite(&self, breaks: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut nodes = Vec::with_capacity((breaks.len() - 1) * self.n_nodes);
        let mut weights = Vec::with_capacity(nodes.capacity());
        for w in breaks.windows(2) {
            let half = 0.5 * (w[1] - w[0]);
            if half <= 0.0 {
                continue;
            }
            let mid = 0.5 * (w[1] + w[0]);
            for (z, wz) in self.nodes.iter().zip(&self.weights) {
                nodes.push(mid + half * z);
                weights.push(half * wz);
            }
        }
        (nodes, weights)
    }

    /// Integrates the piecewise-linear interpolant of the sample over the
    /// sample's range, split at the basis breakpoints.
    fn inner_product(&self, basis: &dyn Basis, s: &FunctionalSample) -> Result<DVector<f64>> {
        check_sample_in_domain(basis, s)?;
        let (lo, hi) = (s.t[0], *s.t.last().unwrap());
        let mut breaks: Vec<f64> = basis
            .breakpoints()
            .into_iter()
            .filter(|&b| b > lo && b < hi)
            .chain(s.t.iter().copied())
            .collect();
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let (nodes, weights) = self.composite(&breaks);
        let values = basis.eval(&nodes, 0)?;
        let fx: Vec<f64> = nodes
            .iter()
            .zip(&weights)
            .map(|(&t, &w)| w * interpolate_linear(&s.t, &s.x, t))
            .collect();
        Ok(values.tr_mul(&DVector::from_vec(fx)))
    }
}

pub fn registry() -> &'static Registry<dyn QuadratureRule> {
    static REG: OnceLock<Registry<dyn QuadratureRule>> = OnceLock::new();
    REG.get_or_init(|| {
        let mut r = Registry::new("quadrature");
        r.register("trapezoid", "trapezoid[:<panels per piece>]", |args, _| {
            expect_arity(args, 0, 1)?;
            let panels = if args.is_empty() { 256 } else { arg(args, 0, "panels")? };
            if panels == 0 {
                return invalid("panels must be positive");
            }
            Ok(Box::new(Trapezoid { panels }) as Box<dyn QuadratureRule>)
        });
        r.register("gauss", "gauss:<nodes per piece>", |args, _| {
            expect_arity(args, 1, 1)?;
            Ok(Box::new(GaussLegendre::new(arg(args, 0, "node count")?)?) as Box<dyn QuadratureRule>)
        });
        r
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_legendre_is_exact_for_degree_2n_minus_1() {
        let gl = GaussLegendre::new(7).unwrap();
        let (n, w) = gl.unit_rule();
        assert_relative_eq!(w.iter().sum::<f64>(), 2.0, epsilon = 1e-14);
        for deg in 0..=13 {
            let got: f64 = n.iter().zip(w).map(|(x, w)| w * x.powi(deg)).sum();
            let exact = if deg % 2 == 0 { 2.0 / (deg + 1) as f64 } else { 0.0 };
            assert_relative_eq!(got, exact, epsilon = 1e-13);
        }
    }

    #[test]
    fn composite_rules_integrate_smooth_functions() {
        let breaks = [0.0, 0.3, 1.0, 2.0];
        for rule in [registry().build("gauss:5", &()).unwrap(), registry().build("trapezoid:2000", &()).unwrap()] {
            let (n, w) = rule.composite(&breaks);
            let got: f64 = n.iter().zip(&w).map(|(t, w)| w * t.exp()).sum();
            assert_relative_eq!(got, 2f64.exp() - 1.0, max_relative = 1e-6);
        }
    }

    #[test]
    fn linear_interpolation_clamps() {
        let t = [0.0, 1.0, 2.0];
        let x = [0.0, 2.0, 0.0];
        assert_eq!(interpolate_linear(&t, &x, 0.5), 1.0);
        assert_eq!(interpolate_linear(&t, &x, -1.0), 0.0);
        assert_eq!(interpolate_linear(&t, &x, 1.5), 1.0);
        assert_eq!(interpolate_linear(&t, &x, 2.0), 0.0);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(registry().build("gauss:0", &()).is_err());
        assert!(registry().build("simpson", &()).is_err());
    }
}
