//! Random small instances and brute-force oracles built straight from the
//! penalized criterion, independent of the marginal estimating equations.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use flmm::basis::{self, Interval};
use flmm::design::{DesignBlocks, SubjectBlock};
use flmm::em::{Lambdas, Penalties, PenalizedSystem, VarianceComponents};

pub struct Instance {
    pub db: DesignBlocks,
    pub pens: Penalties,
    pub vc: VarianceComponents,
    pub lam: Lambdas,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| normal(rng))
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    10f64.powf(rng.random_range(lo..hi))
}

/// PSD `J×J` with a one-dimensional null space.
fn random_penalty(rng: &mut ChaCha8Rng, j: usize) -> DMatrix<f64> {
    let b = random_matrix(rng, j, j.saturating_sub(1));
    let mut g = &b * b.transpose();
    g.fill_upper_triangle_with_lower_triangle();
    g
}

fn design_matrix(rng: &mut ChaCha8Rng, m: usize, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, p, |_, c| if c == 0 { 1.0 } else { normal(rng) })
}

/// An instance with `n ≤ n_max` subjects, `m_i ≤ m_max` visits and
/// `J = K ≤ jk_max`, redrawn until the joint normal equations are well
/// conditioned.
pub fn random_instance(seed: u64, n_max: usize, m_max: usize, jk_max: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut last = String::new();
    for _ in 0..200 {
        let n = rng.random_range(1..=n_max);
        let jk = rng.random_range(2..=jk_max);
        let blocks: Vec<SubjectBlock> = (0..n)
            .map(|i| {
                let m = rng.random_range(1..=m_max);
                SubjectBlock {
                    id: format!("s{i}"),
                    y: DVector::from_fn(m, |_, _| 2.0 + normal(&mut rng)),
                    w: design_matrix(&mut rng, m, jk + 1),
                    z: design_matrix(&mut rng, m, jk + 1),
                }
            })
            .collect();
        let c = random_matrix(&mut rng, jk, jk);
        let mut d = &c * c.transpose() * 0.5 + DMatrix::identity(jk, jk) * 0.2;
        d.fill_upper_triangle_with_lower_triangle();
        let vc = VarianceComponents::new(rng.random_range(0.3..2.0), rng.random_range(0.2..2.0), d).unwrap();
        let lam = Lambdas::new(log_uniform(&mut rng, -2.0, 2.0), log_uniform(&mut rng, -2.0, 2.0)).unwrap();
        let desc = basis::from_spec("bspline:4:0", Interval::new(0.0, 1.0).unwrap()).unwrap().descriptor();
        let pens = Penalties {
            beta_basis: desc.clone(),
            b_basis: desc,
            beta_op: "random".into(),
            b_op: "random".into(),
            quadrature: "none".into(),
            g: random_penalty(&mut rng, jk),
            g_b: random_penalty(&mut rng, jk),
        };
        let inst = Instance {
            db: DesignBlocks { blocks },
            pens,
            vc,
            lam,
        };
        let (m, _) = joint_system(&inst);
        let e = m.symmetric_eigenvalues();
        let (lo, hi) = (e.min(), e.max());
        if lo <= 1e-8 * hi {
            last = format!("ill-conditioned joint system: {lo} / {hi}");
            continue;
        }
        match PenalizedSystem::new(&inst.vc, &inst.db, &inst.pens, &inst.lam) {
            Ok(_) => return inst,
            Err(e) => last = e.to_string(),
        }
    }
    panic!("no admissible instance for seed {seed}: {last}");
}

pub fn fixed_dim(inst: &Instance) -> usize {
    inst.db.fixed_dim()
}

pub fn random_dim(inst: &Instance) -> usize {
    inst.db.random_dim()
}

/// `(θ', ξ_1', …, ξ_n')'`.
pub fn pack(theta: &DVector<f64>, xi: &[DVector<f64>]) -> DVector<f64> {
    let mut v: Vec<f64> = theta.iter().copied().collect();
    for x in xi {
        v.extend(x.iter());
    }
    DVector::from_vec(v)
}

pub fn unpack(inst: &Instance, x: &DVector<f64>) -> (DVector<f64>, Vec<DVector<f64>>) {
    let p = fixed_dim(inst);
    let q = random_dim(inst);
    let theta = x.rows(0, p).into_owned();
    let xi = (0..inst.db.n_subjects()).map(|i| x.rows(p + i * q, q).into_owned()).collect();
    (theta, xi)
}

/// The penalized criterion evaluated term by term.
pub fn h_value(inst: &Instance, x: &DVector<f64>) -> f64 {
    let (theta, xi) = unpack(inst, x);
    let s2 = inst.vc.sigma2_eps;
    let d_inv = inst.vc.d.clone().try_inverse().unwrap();
    let c = theta.rows(1, theta.len() - 1);
    let mut h = 0.5 * inst.lam.lambda_beta * (c.transpose() * &inst.pens.g * c)[(0, 0)];
    for (blk, xi_i) in inst.db.blocks.iter().zip(&xi) {
        let r = &blk.y - &blk.w * &theta - &blk.z * xi_i;
        let b = xi_i.rows(1, xi_i.len() - 1);
        h += r.norm_squared() / (2.0 * s2);
        h += 0.5 * (b.transpose() * &d_inv * b)[(0, 0)];
        h += 0.5 * inst.lam.lambda_b * (b.transpose() * &inst.pens.g_b * b)[(0, 0)];
        h += xi_i[0] * xi_i[0] / (2.0 * inst.vc.sigma2_a);
    }
    h
}

/// Hessian `M` and linear term `r` of the criterion, `H = ½x'Mx − r'x + c`.
pub fn joint_system(inst: &Instance) -> (DMatrix<f64>, DVector<f64>) {
    let p = fixed_dim(inst);
    let q = random_dim(inst);
    let n = inst.db.n_subjects();
    let s2 = inst.vc.sigma2_eps;
    let dim = p + n * q;
    let mut m = DMatrix::zeros(dim, dim);
    let mut r = DVector::zeros(dim);
    let k = q - 1;
    let mut prior = DMatrix::zeros(q, q);
    prior[(0, 0)] = 1.0 / inst.vc.sigma2_a;
    let d_inv = inst.vc.d.clone().try_inverse().unwrap();
    prior.view_mut((1, 1), (k, k)).copy_from(&(d_inv + &inst.pens.g_b * inst.lam.lambda_b));
    m.view_mut((1, 1), (p - 1, p - 1)).copy_from(&(&inst.pens.g * inst.lam.lambda_beta));
    for (i, blk) in inst.db.blocks.iter().enumerate() {
        let o = p + i * q;
        let mut tt = m.view((0, 0), (p, p)).into_owned();
        tt += blk.w.transpose() * &blk.w / s2;
        m.view_mut((0, 0), (p, p)).copy_from(&tt);
        let tx = blk.w.transpose() * &blk.z / s2;
        m.view_mut((0, o), (p, q)).copy_from(&tx);
        m.view_mut((o, 0), (q, p)).copy_from(&tx.transpose());
        m.view_mut((o, o), (q, q)).copy_from(&(blk.z.transpose() * &blk.z / s2 + &prior));
        let rt = r.rows(0, p) + blk.w.transpose() * &blk.y / s2;
        r.rows_mut(0, p).copy_from(&rt);
        r.rows_mut(o, q).copy_from(&(blk.z.transpose() * &blk.y / s2));
    }
    (m, r)
}

/// Minimizer of the criterion from its own normal equations.
pub fn joint_minimizer(inst: &Instance) -> DVector<f64> {
    let (m, r) = joint_system(inst);
    m.lu().solve(&r).unwrap()
}

/// Central-difference gradient.
pub fn fd_gradient(f: impl Fn(&DVector<f64>) -> f64, x: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(x.len(), |k, _| {
        let h = 1e-4 * x[k].abs().max(1.0);
        let mut a = x.clone();
        let mut b = x.clone();
        a[k] += h;
        b[k] -= h;
        (f(&a) - f(&b)) / (2.0 * h)
    })
}

/// Stacked fitted values `Wθ̂ + Zξ̂` for the responses in `db`.
pub fn fitted(sys: &PenalizedSystem, db: &DesignBlocks) -> DVector<f64> {
    let (theta, xi) = sys.estimate(db);
    let parts: Vec<f64> = db
        .blocks
        .iter()
        .zip(&xi)
        .flat_map(|(b, x)| (&b.w * &theta + &b.z * x).iter().copied().collect::<Vec<_>>())
        .collect();
    DVector::from_vec(parts)
}

/// `Σ_k ∂Ŷ_k/∂Y_k` by unit perturbations of each response; exact for a
/// linear smoother up to rounding.
pub fn perturbation_df(sys: &PenalizedSystem, db: &DesignBlocks) -> f64 {
    let y = db.stacked_y();
    let base = fitted(sys, db);
    let mut total = 0.0;
    for k in 0..y.len() {
        let mut yk = y.clone();
        yk[k] += 1.0;
        total += fitted(sys, &db.with_response(&yk))[k] - base[k];
    }
    total
}
