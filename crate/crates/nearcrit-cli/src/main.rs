use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use nearcrit_cli::config::{Experiment, RunConfig};
use nearcrit_cli::error::{CliError, CliResult};
use nearcrit_cli::run::run;

/// Runs one experiment described by a `key = value` configuration file.
#[derive(Debug, Parser)]
#[command(name = "nearcrit", version)]
struct Args {
    /// One of: mst, invade, cutoff, cutoff-invade, compare, arms, census,
    /// dimension, volume, calibrate, render.
    experiment: String,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicas: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn configure(args: &Args) -> CliResult<RunConfig> {
    let experiment = Experiment::parse(&args.experiment)?;
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            RunConfig::parse(&text, experiment)?
        }
        None => RunConfig::defaults(experiment),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(k) = args.replicas {
        cfg.replicas = k;
    }
    if let Some(o) = &args.out {
        cfg.out = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn init_threads() -> CliResult<()> {
    if let Ok(v) = std::env::var("NEARCRIT_THREADS") {
        let n: usize = v.trim().parse().map_err(|_| CliError::Config(format!("NEARCRIT_THREADS must be a positive integer, got {v:?}")))?;
        if n == 0 {
            return Err(CliError::Config("NEARCRIT_THREADS must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Config(e.to_string()))?;
    }
    Ok(())
}

fn report(e: &CliError) -> ExitCode {
    let diag = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
    eprintln!("{diag}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let outcome = init_threads().and_then(|()| configure(&args)).and_then(|cfg| run(&cfg));
    match outcome {
        Ok(o) if o.complete => ExitCode::SUCCESS,
        Ok(o) => {
            eprintln!("{}", serde_json::json!({ "error": "incomplete", "message": format!("some replicas failed; see {}", o.dir.join("summary.json").display()) }));
            ExitCode::from(1)
        }
        Err(e) => report(&e),
    }
}
