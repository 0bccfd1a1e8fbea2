use flmm::sim::{generate, rmise_individual, rmise_population, run_study, Case, Scenario, StudyConfig};

#[test]
fn visit_scores_have_the_stated_variances() {
    let sim = generate(&Scenario {
        n_grid: 3,
        ..Scenario::new(Case::Poly, 10_000, 10, 0.0, 0.5, 99)
    })
    .unwrap();
    let n = 100_000.0;
    for k in 0..4 {
        let (mut s, mut s2) = (0.0, 0.0);
        for t in &sim.truth {
            for x in &t.scores {
                s += x[k];
                s2 += x[k] * x[k];
            }
        }
        let mean = s / n;
        let var = s2 / n - mean * mean;
        let target = 2.0 / 2f64.powi(k as i32 + 1);
        assert!((var / target - 1.0).abs() < 0.02, "score {k}: {var} vs {target}");
        assert!(mean.abs() < 0.02);
    }
}

#[test]
fn rmise_of_a_shifted_constant() {
    let grid: Vec<f64> = (0..=100).map(|k| k as f64 / 100.0).collect();
    let truth = vec![1.0; grid.len()];
    let hat = vec![1.1; grid.len()];
    assert!((rmise_population(&hat, &truth, &grid).unwrap() - 0.01).abs() < 1e-12);
}

#[test]
fn rmise_pools_subjects_before_dividing() {
    let grid: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
    let truth = vec![vec![1.0; 11], vec![2.0; 11]];
    let hat = vec![vec![1.0; 11], vec![3.0; 11]];
    // (0 + 1) / (1 + 4)
    assert!((rmise_individual(&hat, &truth, &grid).unwrap() - 0.2).abs() < 1e-12);
    assert!(rmise_individual(&hat[..1], &truth, &grid).is_err());
}

#[test]
fn single_replicate_report_is_reproducible() {
    let scn = Scenario {
        n_grid: 41,
        ..Scenario::new(Case::Poly, 10, 4, 0.0, 0.5, 3)
    };
    let cfg = StudyConfig {
        max_iter: 30,
        ..StudyConfig::for_case(Case::Poly)
    };
    let a = run_study(&scn, 1, &cfg).unwrap();
    let b = run_study(&scn, 1, &cfg).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    assert_eq!(a.completed, 1);
    assert!(a.rmise_beta.mean.is_finite() && a.rmise_beta.mean >= 0.0);
}
