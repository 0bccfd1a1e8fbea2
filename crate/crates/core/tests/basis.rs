use nalgebra::DMatrix;

use flmm::basis::{from_spec, penalty_matrix, roughness_registry, Interval};
use flmm::quadrature;

fn simpson_gram(spec: &str, deriv: usize, domain: Interval, panels: usize) -> DMatrix<f64> {
    let b = from_spec(spec, domain).unwrap();
    let h = domain.width() / panels as f64;
    let t: Vec<f64> = (0..=panels).map(|k| (domain.lo + k as f64 * h).min(domain.hi)).collect();
    let v = b.eval(&t, deriv).unwrap();
    let w = DMatrix::from_fn(1, panels + 1, |_, k| {
        let c = if k == 0 || k == panels {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        c * h / 3.0
    });
    let mut g = DMatrix::zeros(v.ncols(), v.ncols());
    for k in 0..=panels {
        let r = v.row(k);
        g += r.transpose() * r * w[(0, k)];
    }
    g
}

fn null_dim(g: &DMatrix<f64>) -> usize {
    let e = g.clone().symmetric_eigenvalues();
    let top = e.max();
    e.iter().filter(|v| v.abs() < 1e-9 * top).count()
}

fn penalty(spec: &str, op: &str, quad: &str, domain: Interval) -> DMatrix<f64> {
    let b = from_spec(spec, domain).unwrap();
    let op = roughness_registry().build(op, &domain).unwrap();
    let q = quadrature::registry().build(quad, &()).unwrap();
    penalty_matrix(b.as_ref(), op.as_ref(), q.as_ref()).unwrap().entries
}

#[test]
fn second_derivative_penalty_matches_simpson_integration() {
    let d = Interval::new(0.0, 1.0).unwrap();
    // 7 equal pieces; 7 * 600 panels keeps every knot on a Simpson node.
    let oracle = simpson_gram("bspline:4:6", 2, d, 4200);
    let got = penalty("bspline:4:6", "d2", "gauss:4", d);
    assert!((&got - &oracle).norm() < 1e-8 * oracle.norm());
}

#[test]
fn fourier_penalty_matches_simpson_integration_on_a_shifted_domain() {
    let d = Interval::new(2.0, 5.0).unwrap();
    let oracle = simpson_gram("fourier:7", 2, d, 3000);
    let got = penalty("fourier:7", "d2", "gauss:20", d);
    assert!((&got - &oracle).norm() < 1e-8 * oracle.norm());
}

#[test]
fn null_space_dimensions() {
    let d = Interval::new(0.0, 1.0).unwrap();
    assert_eq!(null_dim(&penalty("bspline:4:10", "d2", "gauss:4", d)), 2);
    assert_eq!(null_dim(&penalty("bspline:4:10", "d1", "gauss:4", d)), 1);
    assert_eq!(null_dim(&penalty("bspline:5:10", "d3", "gauss:5", d)), 3);
    assert_eq!(null_dim(&penalty("fourier:9", "harmonic", "gauss:20", d)), 3);
    assert_eq!(null_dim(&penalty("fourier:9", "d2", "gauss:20", d)), 1);
}

#[test]
fn trapezoid_converges_to_gauss_penalty() {
    let d = Interval::new(0.0, 1.0).unwrap();
    let exact = penalty("bspline:4:8", "d2", "gauss:4", d);
    let coarse = penalty("bspline:4:8", "d2", "trapezoid:16", d);
    let fine = penalty("bspline:4:8", "d2", "trapezoid:64", d);
    let e1 = (&coarse - &exact).norm();
    let e2 = (&fine - &exact).norm();
    assert!(e2 < e1 / 10.0, "{e1} {e2}");
}
