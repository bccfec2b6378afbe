//! CSV tables and the JSON run manifest.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use randstop::lsmc::MonteCarloEstimate;
use serde_json::{json, Value};

use crate::config::ExperimentConfig;
use crate::run::{CellResult, Report};

pub const COLUMNS: &str =
    "experiment,x0,lambda,kbar,true,primal,primal_se,dual,dual_se,andersen,andersen_se,pi,pi_se,seconds";

/// Build identifier baked in at compile time.
pub const BUILD: &str = env!("RANDSTOP_BUILD");

fn value(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_default()
}

fn pair(e: Option<MonteCarloEstimate>) -> [String; 2] {
    [value(e.map(|e| e.mean)), value(e.map(|e| e.std_error))]
}

/// The result table. `seconds` is written only when `timings` is set, so that
/// repeated runs compare byte for byte.
pub fn table_csv(report: &Report, timings: bool) -> String {
    let mut s = String::from(COLUMNS);
    s.push('\n');
    for c in &report.cells {
        let [p, p_se] = pair(c.primal);
        let [d, d_se] = pair(c.dual);
        let [a, a_se] = pair(c.andersen);
        let [pi, pi_se] = pair(c.pi);
        let seconds = if timings { format!("{:.2}", c.seconds) } else { String::new() };
        writeln!(
            s,
            "{},{},{},{},{},{p},{p_se},{d},{d_se},{a},{a_se},{pi},{pi_se},{seconds}",
            report.experiment.name(),
            c.x0,
            c.lambda,
            c.kbar.map(|k| k.to_string()).unwrap_or_default(),
            value(c.truth),
        )
        .unwrap();
    }
    s
}

fn estimate_json(e: Option<MonteCarloEstimate>) -> Value {
    match e {
        Some(e) => json!({"mean": e.mean, "std_error": e.std_error, "paths": e.n}),
        None => Value::Null,
    }
}

fn cell_json(c: &CellResult) -> Value {
    json!({
        "x0": c.x0,
        "lambda": c.lambda,
        "seed": c.seed,
        "case": c.case.map(|b| json!({
            "horizon": b.horizon,
            "rate": b.rate,
            "mu": b.mu,
            "rights": b.rights,
            "jump": b.jump,
        })),
        "kbar": c.kbar,
        "truncation_tail": estimate_json(c.tail),
        "true": c.truth,
        "primal": estimate_json(c.primal),
        "dual": estimate_json(c.dual),
        "andersen": estimate_json(c.andersen),
        "pi": estimate_json(c.pi),
        "seconds": c.seconds,
        "failure": c.failure.as_ref().map(|f| json!({"kind": f.kind, "message": f.message})),
    })
}

pub fn manifest(cfg: &ExperimentConfig, report: &Report) -> Value {
    let a = report.algo;
    let timestamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    json!({
        "experiment": report.experiment.name(),
        "seed": cfg.seed,
        "threads": cfg.threads,
        "build": BUILD,
        "timestamp_unix": timestamp,
        "wall_seconds": report.wall_seconds,
        "config": cfg.echo,
        "effective_counts": {
            "paths_train": a.paths_train,
            "paths_eval": a.paths_eval,
            "dual_outer": a.dual_outer,
            "dual_sub": a.dual_sub,
            "pi_outer": a.pi_outer,
            "pi_sub": a.pi_sub,
            "truncation_paths": a.truncation_paths,
            "window": a.window,
        },
        "cells": report.cells.iter().map(cell_json).collect::<Vec<_>>(),
    })
}

/// Writes the table, any curves and the manifest into `dir`; returns the paths.
pub fn write_all(dir: &Path, cfg: &ExperimentConfig, report: &Report) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let name = report.experiment.name();
    let mut written = Vec::new();
    let table = dir.join(format!("{name}.csv"));
    fs::write(&table, table_csv(report, cfg.timings))?;
    written.push(table);
    for (i, curve) in report.curves.iter().enumerate() {
        let path = dir.join(format!("{name}_case{}.csv", i + 1));
        fs::write(&path, curve.to_csv())?;
        written.push(path);
    }
    let path = dir.join(format!("{name}.manifest.json"));
    let text = serde_json::to_string_pretty(&manifest(cfg, report)).map_err(io::Error::other)?;
    fs::write(&path, text + "\n")?;
    written.push(path);
    Ok(written)
}
