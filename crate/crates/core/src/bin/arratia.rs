use std::path::PathBuf;
use std::process::ExitCode;

use arratia::harness::{run_with_threads, Experiment, ExperimentConfig, Status};
use clap::Parser;

/// Monte Carlo experiments on coalescing flows with drift.
#[derive(Debug, Parser)]
#[command(version)]
struct Cli {
    /// TOML config file; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    experiment: Option<Experiment>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicas: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn threads() -> Result<usize, String> {
    match std::env::var("ARRATIA_THREADS") {
        Ok(v) => match v.parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(format!("ARRATIA_THREADS must be a positive integer, got {v:?}")),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn load(cli: &Cli) -> arratia::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(e) = cli.experiment {
        cfg.experiment = Some(e);
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(r) = cli.replicas {
        cfg.replicas = r;
    }
    if let Some(m) = cli.steps {
        cfg.steps = m;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let threads = match threads() {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let out = match run_with_threads(&cfg, threads) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    for r in &out.outcome.rows {
        let status = match r.status {
            Status::Pass => "pass",
            Status::Fail => "FAIL",
            Status::Inconclusive => "inconclusive",
        };
        let oracle = r.oracle.map_or_else(|| "-".to_string(), |o| format!("{o:.6}"));
        println!(
            "{:<13} {:<60} est {:>12.6} se {:>10.6} ref {:>12} {status}",
            r.experiment, r.quantity, r.estimate, r.stderr, oracle
        );
    }
    for f in &out.files {
        eprintln!("wrote {}", f.display());
    }
    ExitCode::from(out.exit_code as u8)
}
