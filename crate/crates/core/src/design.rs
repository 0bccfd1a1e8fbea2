//! Functional samples, datasets, and the per-subject design blocks
//! `(Y_i, W_i, Z_i)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{Basis, Interval};
use crate::error::{FlmmError, Result};
use crate::quadrature::QuadratureRule;

/// One discretely observed curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalSample {
    pub subject_id: String,
    pub visit_id: String,
    pub t: Vec<f64>,
    pub x: Vec<f64>,
}

impl FunctionalSample {
    pub fn new(subject_id: impl Into<String>, visit_id: impl Into<String>, t: Vec<f64>, x: Vec<f64>) -> Self {
        Self {
            subject_id: subject_id.into(),
            visit_id: visit_id.into(),
            t,
            x,
        }
    }

    pub fn validate(&self, domain: &Interval) -> Result<()> {
        let tag = || format!("curve ({}, {})", self.subject_id, self.visit_id);
        if self.t.len() != self.x.len() {
            return Err(FlmmError::Inconsistent(format!(
                "{}: {} time points but {} values",
                tag(),
                self.t.len(),
                self.x.len()
            )));
        }
        if self.t.len() < 2 {
            return Err(FlmmError::Inconsistent(format!("{}: fewer than two points", tag())));
        }
        if self.t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(FlmmError::Inconsistent(format!("{}: grid not strictly increasing", tag())));
        }
        if self.x.iter().any(|v| !v.is_finite()) {
            return Err(FlmmError::Inconsistent(format!("{}: non-finite value", tag())));
        }
        for &t in [self.t[0], self.t[self.t.len() - 1]].iter() {
            if !domain.contains(t) {
                return Err(FlmmError::OutsideDomain {
                    t,
                    lo: domain.lo,
                    hi: domain.hi,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Visit {
    pub y: f64,
    pub curve: FunctionalSample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subject {
    pub id: String,
    pub visits: Vec<Visit>,
}

/// Scalar responses paired with functional covariates, grouped by subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub subjects: Vec<Subject>,
    pub domain: Interval,
}

impl Dataset {
    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    pub fn total_visits(&self) -> usize {
        self.subjects.iter().map(|s| s.visits.len()).sum()
    }

    pub fn curves(&self) -> impl Iterator<Item = &FunctionalSample> {
        self.subjects.iter().flat_map(|s| s.visits.iter().map(|v| &v.curve))
    }

    pub fn validate(&self) -> Result<()> {
        if self.subjects.is_empty() {
            return Err(FlmmError::Inconsistent("dataset has no subjects".into()));
        }
        for s in &self.subjects {
            if s.visits.is_empty() {
                return Err(FlmmError::Inconsistent(format!("subject {} has no visits", s.id)));
            }
            for v in &s.visits {
                if v.curve.subject_id != s.id {
                    return Err(FlmmError::Inconsistent(format!(
                        "visit {} filed under subject {} belongs to {}",
                        v.curve.visit_id, s.id, v.curve.subject_id
                    )));
                }
                if !v.y.is_finite() {
                    return Err(FlmmError::Inconsistent(format!(
                        "response for ({}, {}) is not finite",
                        s.id, v.curve.visit_id
                    )));
                }
                v.curve.validate(&self.domain)?;
            }
        }
        Ok(())
    }

    /// Copy with every curve replaced by `f(curve)`, keeping responses.
    pub fn map_curves(&self, mut f: impl FnMut(&FunctionalSample) -> FunctionalSample) -> Dataset {
        Dataset {
            domain: self.domain,
            subjects: self
                .subjects
                .iter()
                .map(|s| Subject {
                    id: s.id.clone(),
                    visits: s
                        .visits
                        .iter()
                        .map(|v| Visit {
                            y: v.y,
                            curve: f(&v.curve),
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

/// `Y_i`, `W_i` (rows `(1, ∫φ'X)`), `Z_i` (rows `(1, ∫ψ'X)`) for one subject.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubjectBlock {
    pub id: String,
    pub y: DVector<f64>,
    pub w: DMatrix<f64>,
    pub z: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignBlocks {
    pub blocks: Vec<SubjectBlock>,
}

impl DesignBlocks {
    pub fn n_subjects(&self) -> usize {
        self.blocks.len()
    }

    pub fn total_obs(&self) -> usize {
        self.blocks.iter().map(|b| b.y.len()).sum()
    }

    /// Columns of `W` (`1 + J`).
    pub fn fixed_dim(&self) -> usize {
        self.blocks[0].w.ncols()
    }

    /// Columns of each `Z_i` (`1 + K`).
    pub fn random_dim(&self) -> usize {
        self.blocks[0].z.ncols()
    }

    pub fn stacked_y(&self) -> DVector<f64> {
        DVector::from_iterator(self.total_obs(), self.blocks.iter().flat_map(|b| b.y.iter().copied()))
    }

    pub fn stacked_w(&self) -> DMatrix<f64> {
        let mut w = DMatrix::zeros(self.total_obs(), self.fixed_dim());
        let mut row = 0;
        for b in &self.blocks {
            w.rows_mut(row, b.y.len()).copy_from(&b.w);
            row += b.y.len();
        }
        w
    }

    /// Block-diagonal `Z` (`N × n(1+K)`).
    pub fn block_diag_z(&self) -> DMatrix<f64> {
        let q = self.random_dim();
        let mut z = DMatrix::zeros(self.total_obs(), q * self.n_subjects());
        let mut row = 0;
        for (i, b) in self.blocks.iter().enumerate() {
            z.view_mut((row, i * q), (b.y.len(), q)).copy_from(&b.z);
            row += b.y.len();
        }
        z
    }

    /// Same design with responses replaced by the stacked vector `y`.
    pub fn with_response(&self, y: &DVector<f64>) -> DesignBlocks {
        let mut out = self.clone();
        let mut row = 0;
        for b in out.blocks.iter_mut() {
            let m = b.y.len();
            b.y.copy_from(&y.rows(row, m));
            row += m;
        }
        out
    }
}

/// `∫ φ_j(t) X(t) dt` for every basis function under `q`.
pub fn inner_product(b: &dyn Basis, s: &FunctionalSample, q: &dyn QuadratureRule) -> Result<DVector<f64>> {
    q.inner_product(b, s)
}

/// Builds per-subject design blocks, subject-major and visit-minor in
/// dataset order.
pub fn build_design(
    d: &Dataset,
    beta_basis: &dyn Basis,
    b_basis: &dyn Basis,
    q: &dyn QuadratureRule,
) -> Result<DesignBlocks> {
    d.validate()?;
    let same = beta_basis.descriptor() == b_basis.descriptor();
    let p = 1 + beta_basis.size();
    let r = 1 + b_basis.size();
    let mut blocks = Vec::with_capacity(d.n_subjects());
    for s in &d.subjects {
        let m = s.visits.len();
        let mut w = DMatrix::<f64>::zeros(m, p);
        let mut z = DMatrix::<f64>::zeros(m, r);
        let mut y = DVector::<f64>::zeros(m);
        for (j, v) in s.visits.iter().enumerate() {
            y[j] = v.y;
            let wp = q.inner_product(beta_basis, &v.curve)?;
            let zp = if same { wp.clone() } else { q.inner_product(b_basis, &v.curve)? };
            w[(j, 0)] = 1.0;
            z[(j, 0)] = 1.0;
            w.view_mut((j, 1), (1, p - 1)).copy_from(&wp.transpose());
            z.view_mut((j, 1), (1, r - 1)).copy_from(&zp.transpose());
        }
        blocks.push(SubjectBlock {
            id: s.id.clone(),
            y,
            w,
            z,
        });
    }
    Ok(DesignBlocks { blocks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{make_bspline_basis, make_fourier_basis};
    use crate::quadrature::{GaussLegendre, Trapezoid};
    use std::f64::consts::PI;

    fn unit() -> Interval {
        Interval::new(0.0, 1.0).unwrap()
    }

    fn sample(f: impl Fn(f64) -> f64, n: usize) -> FunctionalSample {
        let t = unit().grid(n);
        let x = t.iter().map(|&v| f(v)).collect();
        FunctionalSample::new("s", "v", t, x)
    }

    #[test]
    fn zero_curve_gives_zero_vector() {
        let b = make_bspline_basis(unit(), 4, 5).unwrap();
        let v = inner_product(b.as_ref(), &sample(|_| 0.0, 50), &Trapezoid::default()).unwrap();
        assert!(v.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn constant_curve_sums_to_domain_length() {
        let d = Interval::new(-1.0, 2.0).unwrap();
        let b = make_bspline_basis(d, 4, 8).unwrap();
        let t = d.grid(301);
        let s = FunctionalSample::new("s", "v", t.clone(), vec![1.0; t.len()]);
        for q in [&Trapezoid::default() as &dyn QuadratureRule, &GaussLegendre::new(5).unwrap()] {
            let v = inner_product(b.as_ref(), &s, q).unwrap();
            assert!((v.sum() - 3.0).abs() < 1e-12, "{}", v.sum());
        }
    }

    #[test]
    fn sine_against_fourier_basis() {
        let b = make_fourier_basis(unit(), 5, 1.0).unwrap();
        let v = inner_product(b.as_ref(), &sample(|t| (2.0 * PI * t).sin(), 500), &Trapezoid::default()).unwrap();
        // ∫ sin(2πt)·√2 sin(2πt) dt = √2/2, all other entries vanish.
        let expect = [0.0, 2f64.sqrt() / 2.0, 0.0, 0.0, 0.0];
        for (got, want) in v.iter().zip(expect) {
            assert!((got - want).abs() < 1e-4, "{got} vs {want}");
        }
    }

    #[test]
    fn linear_in_the_curve() {
        let b = make_bspline_basis(unit(), 4, 6).unwrap();
        let q = Trapezoid::default();
        let f1 = |t: f64| (3.0 * t).cos();
        let f2 = |t: f64| t * t - 0.2;
        let a = 2.7;
        let lhs = inner_product(b.as_ref(), &sample(|t| a * f1(t) + f2(t), 101), &q).unwrap();
        let rhs = inner_product(b.as_ref(), &sample(f1, 101), &q).unwrap() * a
            + inner_product(b.as_ref(), &sample(f2, 101), &q).unwrap();
        assert!((lhs - rhs).amax() < 1e-12);
    }

    #[test]
    fn trapezoid_error_shrinks_quadratically() {
        let b = make_bspline_basis(unit(), 4, 3).unwrap();
        let q = Trapezoid::default();
        let f = |t: f64| (2.0 * t).exp();
        assert!(inner_product(b.as_ref(), &sample(f, 1), &q).is_err(), "single-point grids are rejected");
        let fine = inner_product(b.as_ref(), &sample(f, 40001), &q).unwrap();
        let e1 = (inner_product(b.as_ref(), &sample(f, 65), &q).unwrap() - &fine).amax();
        let e2 = (inner_product(b.as_ref(), &sample(f, 129), &q).unwrap() - &fine).amax();
        let ratio = e1 / e2;
        assert!((ratio - 4.0).abs() < 0.3, "ratio {ratio}");
    }

    fn dataset(n: usize, m: usize) -> Dataset {
        let subjects = (0..n)
            .map(|i| Subject {
                id: format!("s{i}"),
                visits: (0..m)
                    .map(|j| {
                        let mut c = sample(|t| (t * (i + j + 1) as f64).sin(), 41);
                        c.subject_id = format!("s{i}");
                        c.visit_id = format!("v{j}");
                        Visit { y: (i * m + j) as f64, curve: c }
                    })
                    .collect(),
            })
            .collect();
        Dataset { subjects, domain: unit() }
    }

    #[test]
    fn shapes_and_leading_ones() {
        let b = make_bspline_basis(unit(), 4, 31).unwrap();
        let db = build_design(&dataset(1, 1), b.as_ref(), b.as_ref(), &Trapezoid::default()).unwrap();
        assert_eq!(db.blocks[0].w.shape(), (1, 36));
        let db = build_design(&dataset(50, 5), b.as_ref(), b.as_ref(), &Trapezoid::default()).unwrap();
        assert_eq!(db.stacked_w().shape(), (250, 36));
        assert!(db.blocks.iter().all(|blk| blk.z.shape() == (5, 36)));
        assert!(db.stacked_w().column(0).iter().all(|v| *v == 1.0));
        assert!(db.blocks.iter().all(|blk| blk.z.column(0).iter().all(|v| *v == 1.0)));
        assert_eq!(db.block_diag_z().shape(), (250, 50 * 36));
        assert_eq!(db.stacked_y()[7], 7.0);
    }

    #[test]
    fn duplicated_visit_gives_identical_rows() {
        let b = make_bspline_basis(unit(), 4, 5).unwrap();
        let k = make_fourier_basis(unit(), 5, 1.0).unwrap();
        let mut d = dataset(1, 2);
        let dup = d.subjects[0].visits[0].clone();
        d.subjects[0].visits.push(dup);
        let db = build_design(&d, b.as_ref(), k.as_ref(), &Trapezoid::default()).unwrap();
        let blk = &db.blocks[0];
        assert_eq!(blk.w.row(0), blk.w.row(2));
        assert_eq!(blk.z.row(0), blk.z.row(2));
    }

    #[test]
    fn validation_errors() {
        let b = make_bspline_basis(unit(), 4, 5).unwrap();
        let q = Trapezoid::default();
        let mut d = dataset(2, 2);
        d.subjects[1].visits.clear();
        assert!(build_design(&d, b.as_ref(), b.as_ref(), &q).is_err());
        let mut d = dataset(2, 2);
        d.subjects[0].visits[1].curve.subject_id = "other".into();
        assert!(build_design(&d, b.as_ref(), b.as_ref(), &q).is_err());
        let mut d = dataset(1, 1);
        d.subjects[0].visits[0].curve.t[3] = 2.0;
        assert!(build_design(&d, b.as_ref(), b.as_ref(), &q).is_err());
    }
}
