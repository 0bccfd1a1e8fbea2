//! Command execution: each command turns a resolved config into files.

use serde_json::json;

use flmm::design::{Dataset, Subject, Visit};
use flmm::em::{coefficients_to_functions, FitResult};
use flmm::fpca::{denoise_dataset, FpcaScope};
use flmm::inference::{beta_band, covariance_registry, gamma_surface, intercept_ci, with_covariance};
use flmm::selection::{selector_registry, GcvSurface};
use flmm::sim::{run_study, StudyReport};

use crate::config::{FitTask, FpcaTask, RunConfig, SimulateTask, Task};
use crate::error::CliError;
use crate::ingest::{ingest_curves, ingest_dataset};
use crate::output::{num, OutputSet, Table};

pub fn log(msg: impl AsRef<str>) {
    eprintln!("flmm: {}", msg.as_ref());
}

pub fn execute(cfg: &RunConfig) -> Result<OutputSet, CliError> {
    match &cfg.task {
        Task::Fit(t) => run_fit(cfg, t, false),
        Task::GcvScan(t) => run_fit(cfg, t, true),
        Task::Simulate(t) => run_simulate(t),
        Task::Fpca(t) => run_fpca(t),
    }
}

fn run_fit(cfg: &RunConfig, task: &FitTask, scan: bool) -> Result<OutputSet, CliError> {
    let responses = task.input.responses.as_deref().expect("fit input has responses");
    let (data, summary) = ingest_dataset(&task.input.curves, responses, task.input.domain)?;
    log(format!(
        "read {} curve rows and {} responses: {} subjects, {} visits on [{}, {}]",
        summary.curve_rows, summary.response_rows, summary.subjects, summary.visits, data.domain.lo, data.domain.hi
    ));
    let data = if task.denoise {
        denoise_dataset(&data, &task.fpca)?.dataset
    } else {
        data
    };
    let model = task.model.build(data.domain)?;
    let db = model.design(&data)?;
    let selector = selector_registry().build(&task.selector, &())?;
    let sel = selector.select(&db, &model.penalties, &cfg.em())?;
    let form = covariance_registry().build(&task.cov_form, &())?;
    let fit = with_covariance(&db, sel.fit, form.as_ref())?;
    log(format!(
        "lambda_beta = {}, lambda_b = {}, {} EM iterations (converged: {})",
        fit.lambdas.lambda_beta, fit.lambdas.lambda_b, fit.convergence.iterations, fit.convergence.converged
    ));

    let mut out = OutputSet::default();
    out.push_json("fit.json", fit.to_json());
    if let Some(s) = &sel.surface {
        out.push("gcv_surface.csv", gcv_table(s));
    }
    if scan {
        return Ok(out);
    }
    let grid = data.domain.grid(task.eval_points);
    let ci = intercept_ci(&fit, task.level)?;
    out.push_json(
        "summary.json",
        serde_json::to_string_pretty(&json!({
            "subjects": data.n_subjects(),
            "visits": data.total_visits(),
            "selector": task.selector,
            "lambda_beta": fit.lambdas.lambda_beta,
            "lambda_b": fit.lambdas.lambda_b,
            "intercept": ci,
            "sigma2_eps": fit.vc.sigma2_eps,
            "sigma2_a": fit.vc.sigma2_a,
            "df": fit.df,
            "gcv": fit.gcv,
            "cov_form": fit.cov_form,
            "iterations": fit.convergence.iterations,
            "converged": fit.convergence.converged,
        }))
        .expect("summary serializes"),
    );
    out.push("beta_band.csv", band_table(&fit, &grid, task.level)?);
    out.push("individual_slopes.csv", slopes_table(&fit, &grid)?);
    out.push("gamma_surface.csv", gamma_table(&fit, &grid)?);
    Ok(out)
}

fn gcv_table(s: &GcvSurface) -> Vec<u8> {
    let mut t = Table::new(&["lambda_beta", "lambda_b", "gcv", "df", "converged", "iterations"]);
    for p in &s.points {
        t.row([
            num(p.lambda_beta),
            num(p.lambda_b),
            num(p.gcv),
            num(p.df),
            p.converged.to_string(),
            p.iterations.to_string(),
        ]);
    }
    t.into_bytes()
}

fn band_table(fit: &FitResult, grid: &[f64], level: f64) -> Result<Vec<u8>, CliError> {
    let band = beta_band(fit, grid, level)?;
    let mut t = Table::new(&["t", "center", "lower", "upper"]);
    for k in 0..grid.len() {
        t.row([num(grid[k]), num(band.center[k]), num(band.lower[k]), num(band.upper[k])]);
    }
    Ok(t.into_bytes())
}

fn slopes_table(fit: &FitResult, grid: &[f64]) -> Result<Vec<u8>, CliError> {
    let f = coefficients_to_functions(fit, grid)?;
    let mut t = Table::new(&["subject_id", "t", "beta", "b", "beta_i"]);
    for (i, id) in fit.subject_ids.iter().enumerate() {
        for k in 0..grid.len() {
            t.row([id.clone(), num(grid[k]), num(f.beta[k]), num(f.b[i][k]), num(f.beta_i[i][k])]);
        }
    }
    Ok(t.into_bytes())
}

fn gamma_table(fit: &FitResult, grid: &[f64]) -> Result<Vec<u8>, CliError> {
    let g = gamma_surface(fit, grid)?;
    let mut t = Table::new(&["s", "t", "value"]);
    for (a, s) in g.s.iter().enumerate() {
        for (b, u) in g.t.iter().enumerate() {
            t.row([num(*s), num(*u), num(g.values[(a, b)])]);
        }
    }
    Ok(t.into_bytes())
}

fn run_simulate(task: &SimulateTask) -> Result<OutputSet, CliError> {
    let report = run_study(&task.scenario, task.replicates, &task.study)?;
    log(format!(
        "{} of {} replicates completed, {} converged",
        report.completed, report.replicates, report.converged
    ));
    let mut out = OutputSet::default();
    out.push_json("study_report.json", report.to_json());
    let mut t = Table::new(&StudyReport::TABLE_HEADER);
    t.row(report.table_row());
    out.push("study_report.csv", t.into_bytes());
    let pw = &report.pointwise;
    let mut t = Table::new(&["t", "truth", "mean", "bias", "std", "rmse"]);
    for k in 0..pw.grid.len() {
        t.row([
            num(pw.grid[k]),
            num(pw.truth[k]),
            num(pw.mean[k]),
            num(pw.bias[k]),
            num(pw.std[k]),
            num(pw.rmse[k]),
        ]);
    }
    out.push("beta_pointwise.csv", t.into_bytes());
    Ok(out)
}

fn run_fpca(task: &FpcaTask) -> Result<OutputSet, CliError> {
    let (curves, domain, rows) = ingest_curves(&task.input.curves, task.input.domain)?;
    log(format!("read {rows} curve rows: {} curves", curves.len()));
    let mut subjects: Vec<Subject> = Vec::new();
    for c in curves {
        let visit = Visit { y: 0.0, curve: c };
        match subjects.last_mut() {
            Some(s) if s.id == visit.curve.subject_id => s.visits.push(visit),
            _ => subjects.push(Subject {
                id: visit.curve.subject_id.clone(),
                visits: vec![visit],
            }),
        }
    }
    let data = Dataset { subjects, domain };
    let den = denoise_dataset(&data, &task.fpca)?;
    let labels: Vec<String> = match task.fpca.scope {
        FpcaScope::Pooled => vec!["pooled".to_string()],
        FpcaScope::PerSubject => data.subjects.iter().map(|s| s.id.clone()).collect(),
    };
    for (label, m) in labels.iter().zip(&den.models) {
        log(format!(
            "{label}: {} components, noise variance {:.6}",
            m.n_components, m.noise_var
        ));
    }
    let mut out = OutputSet::default();
    out.push_json(
        "fpca_model.json",
        serde_json::to_string_pretty(&json!({
            "scope": task.fpca.scope,
            "labels": labels,
            "models": den.models,
        }))
        .expect("FPCA models serialize"),
    );
    let mut t = Table::new(&["model", "component", "eigenvalue", "t", "value"]);
    for (label, m) in labels.iter().zip(&den.models) {
        for k in 0..m.n_components {
            for (q, tq) in m.grid.iter().enumerate() {
                t.row([
                    label.clone(),
                    (k + 1).to_string(),
                    num(m.eigenvalues[k]),
                    num(*tq),
                    num(m.eigenfunctions[k][q]),
                ]);
            }
        }
    }
    out.push("fpca_eigenfunctions.csv", t.into_bytes());
    let mut t = Table::new(&["subject_id", "visit_id", "t", "x"]);
    for c in den.dataset.curves() {
        for (tq, x) in c.t.iter().zip(&c.x) {
            t.row([c.subject_id.clone(), c.visit_id.clone(), num(*tq), num(*x)]);
        }
    }
    out.push("reconstructed_curves.csv", t.into_bytes());
    Ok(out)
}
