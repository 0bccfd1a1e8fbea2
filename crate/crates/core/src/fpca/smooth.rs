//! Local-linear kernel smoothers in one and two dimensions.

use nalgebra::{DMatrix, Matrix3, Vector3};

use crate::error::{invalid, Result};

pub fn epanechnikov(u: f64) -> f64 {
    if u.abs() < 1.0 {
        0.75 * (1.0 - u * u)
    } else {
        0.0
    }
}

/// Local-linear fit of weighted points `(x, y, w)` at each target.
///
/// Falls back to the kernel-weighted mean where the window holds a single
/// distinct `x`; fails where it holds none.
pub fn local_linear(x: &[f64], y: &[f64], w: &[f64], targets: &[f64], h: f64) -> Result<Vec<f64>> {
    if !(h > 0.0 && h.is_finite()) {
        return invalid(format!("bandwidth must be positive, got {h}"));
    }
    targets
        .iter()
        .map(|&a| {
            let (mut s0, mut s1, mut s2, mut t0, mut t1) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for k in 0..x.len() {
                let d = x[k] - a;
                let kw = w[k] * epanechnikov(d / h);
                if kw == 0.0 {
                    continue;
                }
                s0 += kw;
                s1 += kw * d;
                s2 += kw * d * d;
                t0 += kw * y[k];
                t1 += kw * d * y[k];
            }
            if s0 <= 0.0 {
                return invalid(format!("no observations within bandwidth {h} of t = {a}"));
            }
            let det = s0 * s2 - s1 * s1;
            if det <= 1e-12 * s0 * s2.max(f64::MIN_POSITIVE) {
                Ok(t0 / s0)
            } else {
                Ok((s2 * t0 - s1 * t1) / det)
            }
        })
        .collect()
}

/// Binned raw surface on sorted support points `u`: `sum[(a, b)]` of the
/// cross-products and their `weight[(a, b)]`.
#[derive(Debug, Clone)]
pub struct BinnedSurface {
    pub u: Vec<f64>,
    pub sum: DMatrix<f64>,
    pub weight: DMatrix<f64>,
}

impl BinnedSurface {
    pub fn mean(&self, a: usize, b: usize) -> f64 {
        self.sum[(a, b)] / self.weight[(a, b)]
    }
}

/// Local-linear surface fit on `grid × grid`, leaving out the diagonal
/// `a == b` of the binned data. Only `s ≤ t` is computed; the result is
/// mirrored, so it is exactly symmetric.
pub fn local_linear_surface_offdiag(raw: &BinnedSurface, grid: &[f64], h: f64) -> Result<DMatrix<f64>> {
    if !(h > 0.0 && h.is_finite()) {
        return invalid(format!("bandwidth must be positive, got {h}"));
    }
    let g = grid.len();
    let window = |c: f64| {
        let lo = raw.u.partition_point(|&v| v <= c - h);
        let hi = raw.u.partition_point(|&v| v < c + h);
        lo..hi
    };
    let mut out = DMatrix::zeros(g, g);
    for i in 0..g {
        let wi = window(grid[i]);
        for j in i..g {
            let wj = window(grid[j]);
            let mut m = Matrix3::<f64>::zeros();
            let mut r = Vector3::<f64>::zeros();
            for a in wi.clone() {
                let da = raw.u[a] - grid[i];
                let ka = epanechnikov(da / h);
                for b in wj.clone() {
                    if a == b || raw.weight[(a, b)] == 0.0 {
                        continue;
                    }
                    let db = raw.u[b] - grid[j];
                    let kw = ka * epanechnikov(db / h) * raw.weight[(a, b)];
                    if kw == 0.0 {
                        continue;
                    }
                    let x = Vector3::new(1.0, da, db);
                    m += x * x.transpose() * kw;
                    r += x * (kw * raw.mean(a, b));
                }
            }
            if m[(0, 0)] <= 0.0 {
                return invalid(format!(
                    "no off-diagonal pairs within bandwidth {h} of ({}, {})",
                    grid[i], grid[j]
                ));
            }
            let v = match m.cholesky() {
                Some(c) if c.l()[(2, 2)] > 1e-10 * m[(0, 0)].sqrt() && c.l()[(1, 1)] > 1e-10 * m[(0, 0)].sqrt() => {
                    c.solve(&r)[0]
                }
                _ => r[0] / m[(0, 0)],
            };
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_integrates_to_one() {
        let n = 20000;
        let s: f64 = (0..n).map(|k| epanechnikov(-1.0 + 2.0 * (k as f64 + 0.5) / n as f64)).sum::<f64>() * 2.0 / n as f64;
        assert!((s - 1.0).abs() < 1e-6);
        assert_eq!(epanechnikov(1.0), 0.0);
    }

    #[test]
    fn local_linear_reproduces_lines_exactly() {
        let x: Vec<f64> = (0..50).map(|k| k as f64 / 49.0).collect();
        let y: Vec<f64> = x.iter().map(|t| 2.0 - 3.0 * t).collect();
        let w = vec![1.0; 50];
        let at = [0.0, 0.3, 0.77, 1.0];
        let fit = local_linear(&x, &y, &w, &at, 0.1).unwrap();
        for (a, f) in at.iter().zip(fit) {
            assert!((f - (2.0 - 3.0 * a)).abs() < 1e-12);
        }
        assert!(local_linear(&x, &y, &w, &[5.0], 0.1).is_err());
    }

    #[test]
    fn surface_reproduces_planes_off_diagonal() {
        let u: Vec<f64> = (0..21).map(|k| k as f64 / 20.0).collect();
        let n = u.len();
        let mut sum = DMatrix::zeros(n, n);
        for a in 0..n {
            for b in 0..n {
                sum[(a, b)] = if a == b { 100.0 } else { 1.0 + u[a] + u[b] };
            }
        }
        let raw = BinnedSurface {
            u: u.clone(),
            sum,
            weight: DMatrix::from_element(n, n, 1.0),
        };
        let grid = [0.0, 0.5, 1.0];
        let s = local_linear_surface_offdiag(&raw, &grid, 0.2).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((s[(i, j)] - (1.0 + grid[i] + grid[j])).abs() < 1e-10);
            }
        }
        assert_eq!(s, s.transpose());
    }
}
