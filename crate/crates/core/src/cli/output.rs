//! CSV tables and run manifests. Every CSV row carries the provenance of
//! the run that produced it.

use std::path::{Path, PathBuf};
use std::process::Command;

use serde::Serialize;

use crate::error::Result;
use crate::tech::Discretization;
use crate::train::TrainConfig;

/// `git describe` of the working tree, or `unknown` outside a checkout.
pub fn commit_id() -> String {
    Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".into())
}

pub fn tiling_label(tiling: &Option<Vec<(usize, usize)>>) -> String {
    match tiling {
        None => "untiled".into(),
        Some(t) => t.iter().map(|(m, n)| format!("{m}x{n}")).collect::<Vec<_>>().join("/"),
    }
}

pub fn discretization_label(d: Discretization) -> &'static str {
    match d {
        Discretization::FourBit => "4bit",
        Discretization::Off => "off",
    }
}

pub const PROVENANCE_HEADER: &[&str] =
    &["seed", "mode", "rs_ratio", "rneu_ratio", "k_sigma", "sigma_unit", "clip_percentile", "discretization", "tiling", "commit"];

pub fn provenance(cfg: &TrainConfig, commit: &str) -> Vec<String> {
    vec![
        cfg.seed.to_string(),
        cfg.mode.to_string(),
        cfg.nonideal.rs_ratio.to_string(),
        cfg.nonideal.rneu_ratio.to_string(),
        cfg.nonideal.k_sigma.to_string(),
        cfg.nonideal.sigma_unit.to_string(),
        cfg.clip_percentile.to_string(),
        discretization_label(cfg.discretization).into(),
        tiling_label(&cfg.tiling),
        commit.into(),
    ]
}

/// Writes a header row and data rows.
pub fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a, C: Serialize> {
    pub command: &'a str,
    pub args: Vec<String>,
    pub version: &'static str,
    pub commit: &'a str,
    pub config: &'a C,
    pub outputs: Vec<PathBuf>,
    pub elapsed_seconds: f64,
    /// Largest difference expected when re-running any row's command.
    pub run_to_run_tolerance: f64,
    pub tolerance_note: &'static str,
}

impl<'a, C: Serialize> Manifest<'a, C> {
    pub fn new(command: &'a str, commit: &'a str, config: &'a C) -> Self {
        Manifest {
            command,
            args: std::env::args().collect(),
            version: env!("CARGO_PKG_VERSION"),
            commit,
            config,
            outputs: Vec::new(),
            elapsed_seconds: 0.0,
            run_to_run_tolerance: 0.0,
            tolerance_note: "single-threaded and seeded; reruns on the same build reproduce every value bit for bit",
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Equal-width histogram of `values` over their own range.
pub fn histogram(values: &[f64], bins: usize) -> Vec<(f64, f64, usize)> {
    if values.is_empty() || bins == 0 {
        return Vec::new();
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; bins];
    for &v in values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts.into_iter().enumerate().map(|(b, c)| (lo + b as f64 * width, lo + (b + 1) as f64 * width, c)).collect()
}
