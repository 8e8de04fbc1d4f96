//! Experiment harness: configuration, dispatch, comparisons and output files.

mod config;
mod experiments;
mod report;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;

pub use config::{Experiment, ExperimentConfig};
pub use experiments::{bridge_hitting_oracle, default_nested, dispatch, Outcome, KERNEL_BIAS};
pub use report::{
    bound_row, compare, Bound, DensityAgreement, Provenance, Quantity, ReportRow, Status, ToleranceRule,
};

use crate::error::{Error, Result};

/// Version string recorded in summaries.
pub fn version() -> String {
    match option_env!("ARRATIA_GIT_DESCRIBE") {
        Some(d) => d.to_string(),
        None => format!("v{}", env!("CARGO_PKG_VERSION")),
    }
}

/// Process exit code for a set of rows: 3 if any row is inconclusive,
/// otherwise 1 if any failed, otherwise 0.
pub fn exit_code(rows: &[ReportRow]) -> i32 {
    if rows.iter().any(|r| r.status == Status::Inconclusive) {
        3
    } else if rows.iter().any(|r| r.status == Status::Fail) {
        1
    } else {
        0
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub outcome: Outcome,
    pub exit_code: i32,
    pub files: Vec<PathBuf>,
}

/// Runs one experiment and writes its outputs under `config.out`.
pub fn run(config: &ExperimentConfig) -> Result<RunOutcome> {
    let outcome = dispatch(config)?;
    let files = write_outputs(config, &outcome)?;
    Ok(RunOutcome { exit_code: exit_code(&outcome.rows), outcome, files })
}

/// Like [`run`], on a dedicated pool of `threads` workers.
pub fn run_with_threads(config: &ExperimentConfig, threads: usize) -> Result<RunOutcome> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| run(config))
}

fn write_outputs(config: &ExperimentConfig, outcome: &Outcome) -> Result<Vec<PathBuf>> {
    let name = config.experiment()?.name();
    let dir = &config.out;
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();

    let summary = json!({
        "experiment": name,
        "version": version(),
        "seed": config.seed,
        "config": config,
        "rows": outcome.rows,
        "details": outcome.details,
    });
    let text = serde_json::to_string_pretty(&summary).map_err(|e| Error::Config(e.to_string()))?;
    files.push(write(dir, &format!("{name}_summary.json"), &text)?);

    for (label, d) in &outcome.densities {
        files.push(write(dir, &format!("{name}_{label}.csv"), &d.to_csv())?);
    }
    files.push(write(dir, &format!("{name}_plot.csv"), &plot_csv(outcome))?);
    Ok(files)
}

fn write(dir: &Path, file: &str, text: &str) -> Result<PathBuf> {
    let path = dir.join(file);
    fs::write(&path, text)?;
    Ok(path)
}

/// Long format: one line per report row and per density bin.
fn plot_csv(outcome: &Outcome) -> String {
    let mut s = String::from("series,index,x,value,stderr\n");
    for (i, r) in outcome.rows.iter().enumerate() {
        let _ = writeln!(s, "\"{}\",{i},,{},{}", r.quantity.replace('"', "'"), r.estimate, r.stderr);
    }
    for (label, d) in &outcome.densities {
        for b in 0..d.len() {
            let x: Vec<String> = d.window.midpoint(b).iter().map(f64::to_string).collect();
            let _ = writeln!(s, "{label},{b},{},{},{}", x.join(" "), d.values[b], d.stderr[b]);
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(status: Status) -> ReportRow {
        let mut r = bound_row("x", "q", 0.0, 0.0, Bound::AtMost, 1.0, Provenance::None);
        r.status = status;
        r
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&[]), 0);
        assert_eq!(exit_code(&[row(Status::Pass)]), 0);
        assert_eq!(exit_code(&[row(Status::Pass), row(Status::Fail)]), 1);
        assert_eq!(exit_code(&[row(Status::Fail), row(Status::Inconclusive)]), 3);
    }

    #[test]
    fn schemes_run_writes_files() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            experiment: Some(Experiment::Schemes),
            n: Some(4),
            out: dir.path().to_path_buf(),
            ..Default::default()
        };
        let out = run(&cfg).unwrap();
        assert_eq!(out.exit_code, 0);
        assert_eq!(out.outcome.details["count"], 16);
        assert!(dir.path().join("schemes_summary.json").exists());
        assert!(dir.path().join("schemes_plot.csv").exists());
    }
}
