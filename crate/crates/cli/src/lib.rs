//! Command-line front end: `fit`, `gcv-scan`, `simulate` and `fpca`.

pub mod commands;
pub mod config;
pub mod error;
pub mod ingest;
pub mod output;

pub use config::{parse_and_validate, RunConfig};
pub use error::CliError;
pub use ingest::{ingest_curves, ingest_dataset};
pub use output::{emit_outputs, OutputSet};

use commands::{execute, log};

/// Resolves, runs and writes one command.
pub fn run_config(cfg: &RunConfig) -> Result<Vec<std::path::PathBuf>, CliError> {
    log(format!(
        "config {}",
        serde_json::to_string(cfg).expect("config serializes")
    ));
    let outputs = match cfg.threads {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| CliError::usage(format!("cannot start {k} threads: {e}")))?
            .install(|| execute(cfg))?,
        None => execute(cfg)?,
    };
    let written = emit_outputs(&outputs, &cfg.out_dir)?;
    for p in &written {
        log(format!("wrote {}", p.display()));
    }
    Ok(written)
}

/// Runs with the given arguments and returns the process exit code.
pub fn run<I, T>(argv: I, env_seed: Option<&str>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let result = parse_and_validate(argv, env_seed).and_then(|cfg| run_config(&cfg));
    match result {
        Ok(_) => 0,
        Err(e @ CliError::Clap(_)) => {
            if let CliError::Clap(inner) = &e {
                let _ = inner.print();
            }
            e.exit_code()
        }
        Err(e) => {
            eprintln!("flmm: error: {e}");
            e.exit_code()
        }
    }
}
