use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use fracflow_cli::{execute, parse_config_for, CliError, Mode};

/// Numerical experiments for the volume-preserving fractional curvature flow.
#[derive(Parser, Debug)]
#[command(name = "fracflow", version)]
struct Args {
    /// flow, perim, curvature, alexandrov, limits or holder
    mode: Mode,
    /// key = value configuration file
    #[arg(long)]
    config: PathBuf,
    /// overrides `seed` from the config
    #[arg(long)]
    seed: Option<u64>,
    /// overrides `output_dir` from the config
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(args: Args) -> Result<i32, CliError> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| CliError::Config(format!("{}: {e}", args.config.display())))?;
    let mut cfg = parse_config_for(&text, Some(args.mode))?;
    if let Some(base) = args.config.parent() {
        cfg.resolve_paths(base);
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let out = args
        .out
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("fracflow-out"));
    let outcome = execute(&cfg, &out)?;
    for f in &outcome.files {
        if f.file_name().is_some_and(|n| n == "report.txt") {
            println!("report: {}", f.display());
        }
    }
    if let Some(e) = &outcome.failure {
        eprintln!("fracflow: {e}");
    }
    Ok(outcome.exit_code())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("fracflow: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
