//! Small dense helpers on top of nalgebra: a Cholesky factor that reports
//! its pivots, symmetric square roots and eigenvalue clipping.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{FlmmError, Result};

/// Lower-triangular Cholesky factor `A = L L'` of a symmetric positive
/// definite matrix.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    l: DMatrix<f64>,
    min_pivot: f64,
}

impl SpdFactor {
    /// Factors `a`, reading only its lower triangle.
    ///
    /// Fails with the offending pivot when `a` is not numerically positive
    /// definite; `min_pivot` of the successful factors is kept for
    /// conditioning diagnostics.
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        debug_assert_eq!(n, a.ncols());
        let mut l = DMatrix::<f64>::zeros(n, n);
        let scale = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max);
        let tiny = f64::EPSILON * scale.max(f64::MIN_POSITIVE) * n as f64;
        let mut smallest = f64::INFINITY;
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            smallest = smallest.min(d);
            if !(d > tiny) {
                return Err(FlmmError::NotPositiveDefinite {
                    index: j,
                    pivot: d,
                    smallest,
                });
            }
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / djj;
            }
        }
        Ok(Self {
            l,
            min_pivot: smallest,
        })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn min_pivot(&self) -> f64 {
        self.min_pivot
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// Solves `L y = b` in place.
    fn forward(&self, b: &mut [f64]) {
        let n = self.dim();
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= self.l[(i, k)] * b[k];
            }
            b[i] = s / self.l[(i, i)];
        }
    }

    /// Solves `L' x = y` in place.
    fn backward(&self, b: &mut [f64]) {
        let n = self.dim();
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in (i + 1)..n {
                s -= self.l[(k, i)] * b[k];
            }
            b[i] = s / self.l[(i, i)];
        }
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        self.forward(x.as_mut_slice());
        self.backward(x.as_mut_slice());
        x
    }

    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = b.clone();
        for mut col in x.column_iter_mut() {
            let s = col.as_mut_slice();
            self.forward(s);
            self.backward(s);
        }
        x
    }

    /// `L^{-1} B`, the half solve used for forming `B' A^{-1} B`.
    pub fn half_solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = b.clone();
        for mut col in x.column_iter_mut() {
            self.forward(col.as_mut_slice());
        }
        x
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let mut inv = self.solve_mat(&DMatrix::identity(self.dim(), self.dim()));
        symmetrize(&mut inv);
        inv
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }
}

/// Replaces `a` by `(a + a')/2`.
pub fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

pub fn max_abs_asymmetry(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

/// Eigen-decomposition with eigenvalues sorted in decreasing order.
pub fn sorted_eigen(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(a.clone());
    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Symmetric PSD square root, with negative eigenvalues treated as zero.
pub fn psd_sqrt(a: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(a.clone());
    let root = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    let mut out = v * DMatrix::from_diagonal(&root) * v.transpose();
    symmetrize(&mut out);
    out
}

/// Raises every eigenvalue of symmetric `a` to at least `floor`.
///
/// Returns the smallest eigenvalue seen before clipping.
pub fn clip_eigenvalues(a: &mut DMatrix<f64>, floor: f64) -> f64 {
    let eig = SymmetricEigen::new(a.clone());
    let min = eig.eigenvalues.min();
    if min >= floor {
        return min;
    }
    let clipped = eig.eigenvalues.map(|v| v.max(floor));
    let v = &eig.eigenvectors;
    *a = v * DMatrix::from_diagonal(&clipped) * v.transpose();
    symmetrize(a);
    min
}

pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(a.clone()).eigenvalues.min()
}

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}
