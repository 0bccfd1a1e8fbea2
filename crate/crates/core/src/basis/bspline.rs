use super::{Basis, BasisDescriptor, Interval};
use crate::error::{invalid, Result};

/// Clamped B-spline basis: boundary knots repeated `order` times.
#[derive(Debug, Clone)]
pub struct BSplineBasis {
    domain: Interval,
    order: usize,
    interior: Vec<f64>,
    knots: Vec<f64>,
}

impl BSplineBasis {
    pub fn equispaced(domain: Interval, order: usize, n_interior: usize) -> Result<Self> {
        let h = domain.width() / (n_interior + 1) as f64;
        let interior = (1..=n_interior).map(|i| domain.lo + i as f64 * h).collect();
        Self::with_knots(domain, order, interior)
    }

    pub fn with_knots(domain: Interval, order: usize, interior: Vec<f64>) -> Result<Self> {
        if order < 2 {
            return invalid(format!("B-spline order must be at least 2, got {order}"));
        }
        if interior.iter().any(|&k| !(k > domain.lo && k < domain.hi)) {
            return invalid("interior knots must lie strictly inside the domain");
        }
        if interior.windows(2).any(|w| w[1] < w[0]) {
            return invalid("interior knots must be nondecreasing");
        }
        let mut knots = vec![domain.lo; order];
        knots.extend_from_slice(&interior);
        knots.extend(std::iter::repeat_n(domain.hi, order));
        Ok(Self {
            domain,
            order,
            interior,
            knots,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn interior_knots(&self) -> &[f64] {
        &self.interior
    }

    /// Knot span index `i` with `knots[i] <= t < knots[i+1]`; the last
    /// nonempty span is used at the right end.
    fn span(&self, t: f64) -> usize {
        let p = self.order - 1;
        let n = self.size() - 1;
        if t >= self.knots[n + 1] {
            return n;
        }
        let i = self.knots.partition_point(|&k| k <= t);
        (i - 1).clamp(p, n)
    }
}

impl Basis for BSplineBasis {
    fn kind(&self) -> &'static str {
        "bspline"
    }

    fn domain(&self) -> Interval {
        self.domain
    }

    fn size(&self) -> usize {
        self.order + self.interior.len()
    }

    fn max_derivative(&self) -> usize {
        self.order - 1
    }

    fn breakpoints(&self) -> Vec<f64> {
        let mut b = Vec::with_capacity(self.interior.len() + 2);
        b.push(self.domain.lo);
        b.extend_from_slice(&self.interior);
        b.push(self.domain.hi);
        b.dedup();
        b
    }

    fn eval_point(&self, t: f64, deriv: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let p = self.order - 1;
        if deriv > p {
            return;
        }
        let i = self.span(t);
        let ders = basis_derivatives(&self.knots, i, t, p, deriv);
        for (r, v) in ders[deriv].iter().enumerate() {
            out[i - p + r] = *v;
        }
    }

    fn descriptor(&self) -> BasisDescriptor {
        BasisDescriptor::Bspline {
            domain: self.domain,
            order: self.order,
            interior_knots: self.interior.clone(),
        }
    }
}

/// Nonzero basis functions of degree `p` on span `i` and their derivatives
/// up to `n` (Cox–de Boor triangle with derivative recurrences).
///
/// Row `k` of the result holds the `k`-th derivatives of functions
/// `i-p ..= i`.
fn basis_derivatives(knots: &[f64], i: usize, t: f64, p: usize, n: usize) -> Vec<Vec<f64>> {
    let mut ndu = vec![vec![0.0; p + 1]; p + 1];
    let mut left = vec![0.0; p + 1];
    let mut right = vec![0.0; p + 1];
    ndu[0][0] = 1.0;
    for j in 1..=p {
        left[j] = t - knots[i + 1 - j];
        right[j] = knots[i + j] - t;
        let mut saved = 0.0;
        for r in 0..j {
            ndu[j][r] = right[r + 1] + left[j - r];
            let temp = ndu[r][j - 1] / ndu[j][r];
            ndu[r][j] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        ndu[j][j] = saved;
    }

    let mut ders = vec![vec![0.0; p + 1]; n + 1];
    for j in 0..=p {
        ders[0][j] = ndu[j][p];
    }
    let mut a = [vec![0.0; p + 1], vec![0.0; p + 1]];
    let (p_i, n_i) = (p as isize, n as isize);
    for r in 0..=p_i {
        let (mut s1, mut s2) = (0usize, 1usize);
        a[0][0] = 1.0;
        for k in 1..=n_i {
            let mut d = 0.0;
            let rk = r - k;
            let pk = p_i - k;
            if r >= k {
                a[s2][0] = a[s1][0] / ndu[(pk + 1) as usize][rk as usize];
                d = a[s2][0] * ndu[rk as usize][pk as usize];
            }
            let j1 = if rk >= -1 { 1 } else { -rk };
            let j2 = if r - 1 <= pk { k - 1 } else { p_i - r };
            for j in j1..=j2 {
                let (ju, rkj) = (j as usize, (rk + j) as usize);
                a[s2][ju] = (a[s1][ju] - a[s1][ju - 1]) / ndu[(pk + 1) as usize][rkj];
                d += a[s2][ju] * ndu[rkj][pk as usize];
            }
            if r <= pk {
                let ku = k as usize;
                a[s2][ku] = -a[s1][ku - 1] / ndu[(pk + 1) as usize][r as usize];
                d += a[s2][ku] * ndu[r as usize][pk as usize];
            }
            ders[k as usize][r as usize] = d;
            std::mem::swap(&mut s1, &mut s2);
        }
    }
    let mut factor = p as f64;
    for k in 1..=n {
        for v in ders[k].iter_mut() {
            *v *= factor;
        }
        factor *= (p - k) as f64;
    }
    ders
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit() -> Interval {
        Interval::new(0.0, 1.0).unwrap()
    }

    #[test]
    fn sizes_match_order_plus_knots() {
        let d23 = Interval::new(0.0, 23.0).unwrap();
        assert_eq!(BSplineBasis::equispaced(d23, 4, 26).unwrap().size(), 30);
        assert_eq!(BSplineBasis::equispaced(unit(), 4, 0).unwrap().size(), 4);
        assert_eq!(BSplineBasis::equispaced(unit(), 4, 31).unwrap().size(), 35);
    }

    #[test]
    fn rejects_low_order_and_bad_knots() {
        assert!(BSplineBasis::equispaced(unit(), 1, 3).is_err());
        assert!(BSplineBasis::with_knots(unit(), 4, vec![0.5, 0.2]).is_err());
        assert!(BSplineBasis::with_knots(unit(), 4, vec![0.0]).is_err());
    }

    #[test]
    fn zero_knots_is_bernstein() {
        // With no interior knots the cubic B-splines are the Bernstein polynomials.
        let b = BSplineBasis::equispaced(unit(), 4, 0).unwrap();
        let mut out = vec![0.0; 4];
        for &t in &[0.0, 0.3, 0.7, 1.0] {
            b.eval_point(t, 0, &mut out);
            let s = 1.0 - t;
            let expect = [s * s * s, 3.0 * t * s * s, 3.0 * t * t * s, t * t * t];
            for j in 0..4 {
                assert_relative_eq!(out[j], expect[j], epsilon = 1e-14);
            }
            b.eval_point(t, 3, &mut out);
            let d3 = [-6.0, 18.0, -18.0, 6.0];
            for j in 0..4 {
                assert_relative_eq!(out[j], d3[j], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn partition_of_unity() {
        let b = BSplineBasis::equispaced(unit(), 4, 31).unwrap();
        let grid = unit().grid(1001);
        let m = b.eval(&grid, 0).unwrap();
        for row in m.row_iter() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
        // Derivative rows of a partition of unity sum to zero.
        let d1 = b.eval(&grid, 1).unwrap();
        for row in d1.row_iter() {
            assert!(row.sum().abs() < 1e-9);
        }
    }

    #[test]
    fn derivatives_match_central_differences() {
        let b = BSplineBasis::equispaced(Interval::new(-1.0, 2.0).unwrap(), 4, 7).unwrap();
        let h = 1e-5;
        let knots = b.interior_knots().to_vec();
        let mut lo = vec![0.0; b.size()];
        let mut hi = vec![0.0; b.size()];
        let mut mid = vec![0.0; b.size()];
        for i in 0..200 {
            let t = -1.0 + 3.0 * (i as f64 + 0.37) / 200.0;
            if knots.iter().any(|k| (k - t).abs() < 10.0 * h) || t - h < -1.0 || t + h > 2.0 {
                continue;
            }
            for deriv in 1..=3 {
                b.eval_point(t - h, deriv - 1, &mut lo);
                b.eval_point(t + h, deriv - 1, &mut hi);
                b.eval_point(t, deriv, &mut mid);
                let scale = mid.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
                for j in 0..b.size() {
                    let fd = (hi[j] - lo[j]) / (2.0 * h);
                    assert!(
                        (fd - mid[j]).abs() <= 1e-6 * scale,
                        "deriv {deriv} fn {j} at {t}: fd {fd} vs {}",
                        mid[j]
                    );
                }
            }
        }
    }

    #[test]
    fn right_end_is_evaluable() {
        let b = BSplineBasis::equispaced(unit(), 4, 5).unwrap();
        let mut out = vec![0.0; b.size()];
        b.eval_point(1.0, 0, &mut out);
        assert_relative_eq!(out[b.size() - 1], 1.0, epsilon = 1e-15);
        assert_relative_eq!(out.iter().sum::<f64>(), 1.0, epsilon = 1e-15);
    }
}
