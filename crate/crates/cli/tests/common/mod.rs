#![allow(dead_code)]

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use flmm::design::Dataset;
use flmm::sim::{generate, Case, Scenario};

pub fn write_dataset(dir: &Path, d: &Dataset) -> (PathBuf, PathBuf) {
    let mut curves = String::from("subject_id,visit_id,t,x\n");
    let mut responses = String::from("subject_id,visit_id,y\n");
    for s in &d.subjects {
        for v in &s.visits {
            for (t, x) in v.curve.t.iter().zip(&v.curve.x) {
                writeln!(curves, "{},{},{t:?},{x:?}", s.id, v.curve.visit_id).unwrap();
            }
            writeln!(responses, "{},{},{:?}", s.id, v.curve.visit_id, v.y).unwrap();
        }
    }
    let c = dir.join("curves.csv");
    let r = dir.join("responses.csv");
    std::fs::write(&c, curves).unwrap();
    std::fs::write(&r, responses).unwrap();
    (c, r)
}

/// Small simulated dataset on 21 points per curve.
pub fn sim_fixture(dir: &Path, n: usize, m: usize, sigma_e: f64, seed: u64) -> (PathBuf, PathBuf) {
    let scn = Scenario {
        n_grid: 21,
        ..Scenario::new(Case::Poly, n, m, sigma_e, 0.5, seed)
    };
    write_dataset(dir, &generate(&scn).unwrap().dataset)
}

/// Periodic curves over a 365-day year, observed every five days, with a
/// slope of the form `a + b sin ωt + c cos ωt`.
pub fn annual_fixture(dir: &Path) -> (PathBuf, PathBuf) {
    let w = 2.0 * PI / 365.0;
    let days: Vec<f64> = (0..74).map(|k| 2.5 + 5.0 * k as f64).filter(|d| *d <= 365.0).collect();
    let beta = |t: f64| 0.002 + 0.001 * (w * t).sin() + 0.0005 * (w * t).cos();
    let mut curves = String::from("subject_id,visit_id,t,x\n");
    let mut responses = String::from("subject_id,visit_id,y\n");
    for i in 0..6 {
        for j in 0..4 {
            let phase = 0.3 * i as f64 + 0.7 * j as f64;
            let amp = 10.0 + i as f64 + 0.5 * j as f64;
            let level = 5.0 + (i * 7 + j * 3) as f64 % 4.0;
            let x: Vec<f64> = days.iter().map(|&t| level + amp * (w * t + phase).sin() + 0.2 * (0.37 * t).sin()).collect();
            let integral: f64 = days.iter().zip(&x).map(|(t, v)| 5.0 * beta(*t) * v).sum();
            let y = 1.0 + 0.05 * i as f64 + integral + 0.01 * ((i + 3 * j) as f64).sin();
            for (t, v) in days.iter().zip(&x) {
                writeln!(curves, "P{i},Y{j},{t:?},{v:?}").unwrap();
            }
            writeln!(responses, "P{i},Y{j},{y:?}").unwrap();
        }
    }
    let c = dir.join("annual_curves.csv");
    let r = dir.join("annual_responses.csv");
    std::fs::write(&c, curves).unwrap();
    std::fs::write(&r, responses).unwrap();
    (c, r)
}

pub fn args(list: &[&str]) -> Vec<String> {
    std::iter::once("flmm").chain(list.iter().copied()).map(String::from).collect()
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}
