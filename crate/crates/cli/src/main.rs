use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use randstop_cli::config::{parse_pairs, ExperimentConfig};
use randstop_cli::{output, run};

/// Monte Carlo optimal stopping with randomly arriving exercise opportunities.
#[derive(Parser, Debug)]
#[command(name = "randstop", version)]
struct Args {
    /// Configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for CSV files and the manifest.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Master seed, overriding the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads, overriding the configuration (a count or `auto`).
    #[arg(long)]
    threads: Option<String>,
    /// Path-count preset, `paper` or `desk`.
    #[arg(long)]
    scale: Option<String>,
    /// Experiment name, overriding the configuration.
    #[arg(long)]
    experiment: Option<String>,
}

const CONFIG_ERROR: u8 = 2;
const NUMERIC_FAILURE: u8 = 3;

fn main() -> ExitCode {
    let args = Args::parse();
    let text = match fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", args.config.display());
            return ExitCode::from(CONFIG_ERROR);
        }
    };
    let cfg = parse_pairs(&text).and_then(|mut pairs| {
        let overrides = [
            ("seed", args.seed.map(|s| s.to_string())),
            ("threads", args.threads.clone()),
            ("scale", args.scale.clone()),
            ("experiment", args.experiment.clone()),
        ];
        for (key, v) in overrides {
            if let Some(v) = v {
                pairs.insert(key.to_string(), v);
            }
        }
        ExperimentConfig::from_pairs(pairs)
    });
    let cfg = match cfg {
        Ok(c) => c,
        Err(e) => {
            for line in &e.0 {
                eprintln!("config error: {line}");
            }
            return ExitCode::from(CONFIG_ERROR);
        }
    };

    let report = run(&cfg);
    match output::write_all(&args.out, &cfg, &report) {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
        }
        Err(e) => {
            eprintln!("error: cannot write results: {e}");
            return ExitCode::FAILURE;
        }
    }
    for (i, c) in report.cells.iter().enumerate() {
        if let Some(f) = &c.failure {
            eprintln!("cell {} (x0 {}, lambda {}): {}: {}", i + 1, c.x0, c.lambda, f.kind, f.message);
        }
    }
    if report.failed() {
        ExitCode::from(NUMERIC_FAILURE)
    } else {
        ExitCode::SUCCESS
    }
}
