use flmm::basis::Interval;
use flmm::design::FunctionalSample;
use flmm::fpca::{denoise_dataset, fit_fpca, FpcaConfig, FpcaScope};
use flmm::quadrature::trapezoid;
use flmm::sim::{generate, psi, Case, Scenario};

fn inner(grid: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let p: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    trapezoid(grid, &p)
}

#[test]
fn recovers_generating_components() {
    let sim = generate(&Scenario::new(Case::Poly, 40, 10, 0.5, 0.5, 11)).unwrap();
    let groups: Vec<(String, Vec<&FunctionalSample>)> = sim
        .dataset
        .subjects
        .iter()
        .map(|s| (s.id.clone(), s.visits.iter().map(|v| &v.curve).collect()))
        .collect();
    let model = fit_fpca(&groups, Interval::new(0.0, 1.0).unwrap(), &FpcaConfig::default()).unwrap();
    for k in 0..2 {
        let truth = 2.0 / 2f64.powi(k as i32 + 1);
        let ratio = model.eigenvalues[k] / truth;
        assert!((0.6..1.5).contains(&ratio), "component {k}: {ratio}");
        let phi: Vec<f64> = model.grid.iter().map(|&t| 2f64.sqrt() * psi(t)[k]).collect();
        let a = inner(&model.grid, &model.eigenfunctions[k], &phi).abs();
        assert!(a > 0.9, "component {k}: alignment {a}");
    }
    for f in model.eigenfunctions.iter().take(3) {
        assert!((inner(&model.grid, f, f) - 1.0).abs() < 1e-8);
    }
    assert!(model.noise_var > 0.0);
}

#[test]
fn reconstruction_is_closer_to_truth_than_raw_curves() {
    let sim = generate(&Scenario::new(Case::Poly, 30, 8, 0.5, 0.5, 12)).unwrap();
    let den = denoise_dataset(&sim.dataset, &FpcaConfig::default()).unwrap();
    let (mut raw, mut rec) = (0.0, 0.0);
    for (i, (s, d)) in sim.dataset.subjects.iter().zip(&den.dataset.subjects).enumerate() {
        for (j, (v, w)) in s.visits.iter().zip(&d.visits).enumerate() {
            let e_raw: Vec<f64> = v.curve.t.iter().zip(&v.curve.x).map(|(t, x)| (x - sim.true_x(i, j, *t)).powi(2)).collect();
            let e_rec: Vec<f64> = w.curve.t.iter().zip(&w.curve.x).map(|(t, x)| (x - sim.true_x(i, j, *t)).powi(2)).collect();
            raw += trapezoid(&v.curve.t, &e_raw);
            rec += trapezoid(&w.curve.t, &e_rec);
        }
    }
    assert!(rec < 0.5 * raw, "{rec} vs {raw}");
}

#[test]
fn per_subject_scope_fits_one_model_per_subject() {
    let sim = generate(&Scenario::new(Case::Poly, 3, 12, 0.3, 0.5, 13)).unwrap();
    let cfg = FpcaConfig {
        scope: FpcaScope::PerSubject,
        rule: "fixed:2".into(),
        ..FpcaConfig::default()
    };
    let den = denoise_dataset(&sim.dataset, &cfg).unwrap();
    assert_eq!(den.models.len(), 3);
    assert!(den.models.iter().all(|m| m.n_components == 2));
    assert_ne!(den.models[0].eigenvalues, den.models[1].eigenvalues);
    for (s, d) in sim.dataset.subjects.iter().zip(&den.dataset.subjects) {
        assert_eq!(s.id, d.id);
        assert_eq!(s.visits.len(), d.visits.len());
        assert!(den.models.iter().any(|m| m.subject_means.contains_key(&s.id)));
    }
    let pooled = denoise_dataset(&sim.dataset, &FpcaConfig::default()).unwrap();
    assert_eq!(pooled.models.len(), 1);
}
