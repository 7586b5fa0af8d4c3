//! Command-line front end: training runs, hardware evaluation, accuracy
//! sweeps, model-versus-circuit validation and netlist export.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 numeric
//! failure (divergence, singular circuit, undefined quantizer scale).

pub mod config;
pub mod output;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::checkpoint;
use crate::error::{Error, Result};
use crate::experiments::{self, SweepRow};
use crate::oracle::export_netlist;
use crate::train::{evaluate, train, History, Mode, Network, TrainConfig};
use config::{parse_discretization, RunConfig};
use output::{commit_id, histogram, provenance, write_csv, Manifest, PROVENANCE_HEADER};

#[derive(Debug, Parser)]
#[command(name = "mxbar", version, about = "Non-ideal memristive crossbar simulation and technology-aware training")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory for checkpoints, CSV tables and manifests.
    #[arg(long, global = true, default_value = "results")]
    pub out: PathBuf,
    /// Directory holding the four MNIST files under their canonical names.
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub train_images: Option<PathBuf>,
    #[arg(long, global = true)]
    pub train_labels: Option<PathBuf>,
    #[arg(long, global = true)]
    pub test_images: Option<PathBuf>,
    #[arg(long, global = true)]
    pub test_labels: Option<PathBuf>,
    /// Use only the first N training images.
    #[arg(long, global = true)]
    pub train_limit: Option<usize>,
    /// Use only the first N test images.
    #[arg(long, global = true)]
    pub test_limit: Option<usize>,
}

/// Hardware corner and mapping overrides.
#[derive(Debug, Args, Default)]
pub struct HardwareArgs {
    /// Technology preset (TiO2, AgSi, TaOx, Spintronics, PCM).
    #[arg(long)]
    pub technology: Option<String>,
    /// Source resistance as a fraction of R_high.
    #[arg(long)]
    pub rs_ratio: Option<f64>,
    /// Neuron resistance as a fraction of R_high.
    #[arg(long)]
    pub rneu_ratio: Option<f64>,
    /// Variation corner in units of sigma, -2..=2.
    #[arg(long, allow_hyphen_values = true)]
    pub k_sigma: Option<i8>,
    /// One sigma of variation in normalized conductance.
    #[arg(long)]
    pub sigma_unit: Option<f64>,
    #[arg(long)]
    pub clip_percentile: Option<f64>,
    /// 4bit or off.
    #[arg(long)]
    pub discretization: Option<String>,
    /// First-layer crossbar size `M,N`; later layers follow.
    #[arg(long, value_parser = parse_pair)]
    pub tile: Option<(usize, usize)>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a network and write a checkpoint, history and manifest.
    Train {
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        /// Start aware training from this checkpoint instead of training
        /// an ideal network first.
        #[arg(long)]
        warm_start: Option<PathBuf>,
        #[command(flatten)]
        hw: HardwareArgs,
    },
    /// Test accuracy of a checkpoint, ideal and on hardware.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        hw: HardwareArgs,
    },
    /// Accuracy over a grid of corners and crossbar sizes.
    Sweep {
        /// Ideally trained checkpoint shared by all repetitions; trained
        /// per repetition when absent.
        #[arg(long)]
        baseline: Option<PathBuf>,
        #[arg(long)]
        repetitions: Option<usize>,
        /// per-corner or nominal.
        #[arg(long)]
        protocol: Option<String>,
        #[arg(long, value_delimiter = ',')]
        modes: Option<Vec<Mode>>,
        #[arg(long, value_delimiter = ',')]
        rs_ratios: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        rneu_ratios: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        k_sigmas: Option<Vec<i8>>,
        /// Crossbar sizes such as `784x500,112x100`.
        #[arg(long, value_delimiter = ',', value_parser = parse_size)]
        tile_sizes: Option<Vec<(usize, usize)>>,
        #[command(flatten)]
        hw: HardwareArgs,
    },
    /// Compare the analytical crossbar model with the circuit solution.
    Validate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        n_images: Option<usize>,
        #[arg(long)]
        layer: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        rs_ratios: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        rneu_ratios: Option<Vec<f64>>,
        #[command(flatten)]
        hw: HardwareArgs,
    },
    /// Write the circuit of one layer and one test image as a netlist.
    ExportNetlist {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 0)]
        layer: usize,
        /// Test-set image driving the rows.
        #[arg(long, default_value_t = 0)]
        image: usize,
        /// Output file; defaults to `<out>/layer<L>_image<I>.net`.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Write normalized units instead of ohms.
        #[arg(long)]
        normalized: bool,
        #[command(flatten)]
        hw: HardwareArgs,
    },
}

fn parse_pair(s: &str) -> std::result::Result<(usize, usize), String> {
    let (m, n) = s.split_once([',', 'x']).ok_or_else(|| format!("expected M,N, got `{s}`"))?;
    let m = m.trim().parse().map_err(|e| format!("{e}"))?;
    let n = n.trim().parse().map_err(|e| format!("{e}"))?;
    Ok((m, n))
}

fn parse_size(s: &str) -> std::result::Result<(usize, usize), String> {
    parse_pair(s)
}

impl clap::ValueEnum for Mode {
    fn value_variants<'a>() -> &'a [Self] {
        &[Mode::Ideal, Mode::Aware]
    }

    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        Some(clap::builder::PossibleValue::new(match self {
            Mode::Ideal => "ideal",
            Mode::Aware => "aware",
        }))
    }
}

fn apply_global(cfg: &mut RunConfig, g: &GlobalArgs) {
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    let d = &mut cfg.data;
    if let Some(dir) = &g.data_dir {
        d.dir = dir.clone();
    }
    for (flag, slot) in [
        (&g.train_images, &mut d.train_images),
        (&g.train_labels, &mut d.train_labels),
        (&g.test_images, &mut d.test_images),
        (&g.test_labels, &mut d.test_labels),
    ] {
        if flag.is_some() {
            slot.clone_from(flag);
        }
    }
    d.train_limit = g.train_limit.or(d.train_limit);
    d.test_limit = g.test_limit.or(d.test_limit);
}

fn apply_hardware(cfg: &mut RunConfig, hw: &HardwareArgs) -> Result<()> {
    if let Some(t) = &hw.technology {
        cfg.technology = crate::tech::TechnologyProfile::preset(t)?;
    }
    let n = &mut cfg.nonideal;
    n.rs_ratio = hw.rs_ratio.unwrap_or(n.rs_ratio);
    n.rneu_ratio = hw.rneu_ratio.unwrap_or(n.rneu_ratio);
    n.k_sigma = hw.k_sigma.unwrap_or(n.k_sigma);
    n.sigma_unit = hw.sigma_unit.unwrap_or(n.sigma_unit);
    cfg.clip_percentile = hw.clip_percentile.unwrap_or(cfg.clip_percentile);
    if let Some(d) = &hw.discretization {
        cfg.discretization = parse_discretization(d)?;
    }
    if let Some(tile) = hw.tile {
        cfg.tiling = Some(experiments::tiling_for(&cfg.layer_dims, tile));
    }
    Ok(())
}

fn load_config(g: &GlobalArgs) -> Result<RunConfig> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::from_path(p)?,
        None => RunConfig::default(),
    };
    apply_global(&mut cfg, g);
    Ok(cfg)
}

fn load_checkpoint(path: &Path, cfg: &mut RunConfig) -> Result<Network> {
    let (net, _) = checkpoint::load(path)?;
    cfg.layer_dims = net.layer_dims().to_vec();
    Ok(net)
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run() -> i32 {
    run_from(std::env::args_os())
}

pub fn execute(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli.global)?;
    std::fs::create_dir_all(&cli.global.out)?;
    let out = cli.global.out.as_path();
    match cli.command {
        Command::Train { mode, epochs, batch_size, learning_rate, warm_start, hw } => {
            apply_hardware(&mut cfg, &hw)?;
            cfg.mode = mode.unwrap_or(cfg.mode);
            let h = match cfg.mode {
                Mode::Ideal => &mut cfg.ideal,
                Mode::Aware => &mut cfg.aware,
            };
            h.epochs = epochs.unwrap_or(h.epochs);
            h.batch_size = batch_size.unwrap_or(h.batch_size);
            h.learning_rate = learning_rate.unwrap_or(h.learning_rate);
            if warm_start.is_some() {
                cfg.warm_start = warm_start;
            }
            cfg.validate()?;
            cmd_train(&cfg, out)
        }
        Command::Evaluate { checkpoint, hw } => {
            let net = load_checkpoint(&checkpoint, &mut cfg)?;
            apply_hardware(&mut cfg, &hw)?;
            cfg.validate()?;
            cmd_evaluate(&cfg, &net, out)
        }
        Command::Sweep { baseline, repetitions, protocol, modes, rs_ratios, rneu_ratios, k_sigmas, tile_sizes, hw } => {
            apply_hardware(&mut cfg, &hw)?;
            let s = &mut cfg.sweep;
            s.repetitions = repetitions.unwrap_or(s.repetitions);
            if let Some(p) = protocol {
                s.protocol = p.parse()?;
            }
            s.modes = modes.unwrap_or(std::mem::take(&mut s.modes));
            s.rs_ratios = rs_ratios.unwrap_or(std::mem::take(&mut s.rs_ratios));
            s.rneu_ratios = rneu_ratios.unwrap_or(std::mem::take(&mut s.rneu_ratios));
            s.k_sigmas = k_sigmas.unwrap_or(std::mem::take(&mut s.k_sigmas));
            s.tile_sizes = tile_sizes.unwrap_or(std::mem::take(&mut s.tile_sizes));
            if baseline.is_some() {
                cfg.sweep_baseline = baseline;
            }
            cfg.validate()?;
            cfg.sweep.validate()?;
            cmd_sweep(&cfg, out)
        }
        Command::Validate { checkpoint, n_images, layer, rs_ratios, rneu_ratios, hw } => {
            let net = load_checkpoint(&checkpoint, &mut cfg)?;
            apply_hardware(&mut cfg, &hw)?;
            let v = &mut cfg.validate;
            v.n_images = n_images.unwrap_or(v.n_images);
            v.layer = layer.unwrap_or(v.layer);
            v.rs_ratios = rs_ratios.unwrap_or(std::mem::take(&mut v.rs_ratios));
            v.rneu_ratios = rneu_ratios.unwrap_or(std::mem::take(&mut v.rneu_ratios));
            cfg.validate()?;
            cmd_validate(&cfg, &net, out)
        }
        Command::ExportNetlist { checkpoint, layer, image, output, normalized, hw } => {
            let net = load_checkpoint(&checkpoint, &mut cfg)?;
            apply_hardware(&mut cfg, &hw)?;
            cfg.validate()?;
            let path = output.unwrap_or_else(|| out.join(format!("layer{layer}_image{image}.net")));
            cmd_export_netlist(&cfg, &net, layer, image, normalized, &path)
        }
    }
}

const HISTORY_HEADER: &[&str] = &["phase", "epoch", "loss", "train_accuracy", "test_accuracy"];

fn history_rows(phase: &str, h: &History, cfg: &TrainConfig, commit: &str) -> Vec<Vec<String>> {
    h.epochs
        .iter()
        .map(|e| {
            let mut r = vec![
                phase.to_string(),
                e.epoch.to_string(),
                e.loss.to_string(),
                e.train_accuracy.to_string(),
                e.test_accuracy.map_or(String::new(), |a| a.to_string()),
            ];
            r.extend(provenance(cfg, commit));
            r
        })
        .collect()
}

fn header(cols: &[&'static str]) -> Vec<&'static str> {
    cols.iter().chain(PROVENANCE_HEADER).copied().collect()
}

pub fn cmd_train(cfg: &RunConfig, out: &Path) -> Result<()> {
    let start = Instant::now();
    let commit = commit_id();
    let (train_set, test_set) = (cfg.data.train()?, cfg.data.test()?);
    let mut rows = Vec::new();
    let ideal_cfg = cfg.train_config(Mode::Ideal);
    let mut net = match (&cfg.mode, &cfg.warm_start) {
        (Mode::Aware, Some(p)) => {
            eprintln!("warm start from {}", p.display());
            checkpoint::load(p)?.0
        }
        _ => {
            let mut net = Network::new(&cfg.layer_dims, cfg.seed)?;
            eprintln!("ideal training: {} epochs", ideal_cfg.epochs);
            let h = train(&mut net, &train_set, Some(&test_set), &ideal_cfg)?;
            report(&h);
            rows.extend(history_rows("ideal", &h, &ideal_cfg, &commit));
            net
        }
    };
    let final_cfg = match cfg.mode {
        Mode::Ideal => ideal_cfg,
        Mode::Aware => {
            let aware_cfg = cfg.train_config(Mode::Aware);
            eprintln!("aware training: {} epochs", aware_cfg.epochs);
            let h = train(&mut net, &train_set, Some(&test_set), &aware_cfg)?;
            report(&h);
            rows.extend(history_rows("aware", &h, &aware_cfg, &commit));
            aware_cfg
        }
    };
    let ckpt = out.join(format!("{}.ckpt", cfg.mode));
    checkpoint::save(&ckpt, &net, &final_cfg)?;
    let history = out.join(format!("{}_history.csv", cfg.mode));
    write_csv(&history, &header(HISTORY_HEADER), rows)?;
    let accuracy = evaluate(&net, &test_set, &final_cfg)?;
    println!("test accuracy ({} mode): {accuracy:.2}%", cfg.mode);
    let mut m = Manifest::new("train", &commit, cfg);
    m.outputs = vec![ckpt, history];
    m.elapsed_seconds = start.elapsed().as_secs_f64();
    m.write(&out.join(format!("{}_manifest.json", cfg.mode)))
}

fn report(h: &History) {
    for e in &h.epochs {
        eprintln!(
            "  epoch {:>3}  loss {:.5}  train {:.2}%  test {}",
            e.epoch,
            e.loss,
            e.train_accuracy,
            e.test_accuracy.map_or("-".into(), |a| format!("{a:.2}%"))
        );
    }
}

pub fn cmd_evaluate(cfg: &RunConfig, net: &Network, out: &Path) -> Result<()> {
    let start = Instant::now();
    let commit = commit_id();
    let test_set = cfg.data.test()?;
    let hw = cfg.train_config(Mode::Aware);
    let ideal = evaluate(net, &test_set, &hw.with_mode(Mode::Ideal))?;
    let hardware = evaluate(net, &test_set, &hw)?;
    println!("ideal accuracy     {ideal:.2}%");
    println!("hardware accuracy  {hardware:.2}%");
    println!("degradation        {:.2} points", ideal - hardware);
    let mut row = vec![test_set.len().to_string(), ideal.to_string(), hardware.to_string(), (ideal - hardware).to_string()];
    row.extend(provenance(&hw, &commit));
    let path = out.join("evaluate.csv");
    write_csv(&path, &header(&["images", "ideal_accuracy", "accuracy", "degradation"]), [row])?;
    let mut m = Manifest::new("evaluate", &commit, cfg);
    m.outputs = vec![path];
    m.elapsed_seconds = start.elapsed().as_secs_f64();
    m.write(&out.join("evaluate_manifest.json"))
}

const SWEEP_HEADER: &[&str] = &[
    "rs_ratio",
    "rneu_ratio",
    "k_sigma",
    "sigma_unit",
    "m",
    "n",
    "mode",
    "protocol",
    "repetition",
    "seed",
    "ideal_accuracy",
    "accuracy",
    "degradation",
    "clip_percentile",
    "discretization",
    "tiling",
    "commit",
];

pub fn cmd_sweep(cfg: &RunConfig, out: &Path) -> Result<()> {
    let start = Instant::now();
    let commit = commit_id();
    let (train_set, test_set) = (cfg.data.train()?, cfg.data.test()?);
    let shared = match &cfg.sweep_baseline {
        Some(p) => Some(checkpoint::load(p)?.0),
        None => None,
    };
    let baseline = |rep: usize, seed: u64| -> Result<Network> {
        if let Some(net) = &shared {
            return Ok(net.clone());
        }
        eprintln!("repetition {rep}: ideal training with seed {seed}");
        let mut net = Network::new(&cfg.layer_dims, seed)?;
        let ideal_cfg = TrainConfig { seed, ..cfg.train_config(Mode::Ideal) };
        train(&mut net, &train_set, None, &ideal_cfg)?;
        Ok(net)
    };
    let progress = |r: &SweepRow| {
        eprintln!(
            "  rs {:<8} rneu {:<8} k {:>2} tile {}x{} {:<5} acc {:.2}% deg {:.2}",
            r.rs_ratio, r.rneu_ratio, r.k_sigma, r.tile_m, r.tile_n, r.mode, r.accuracy, r.degradation
        )
    };
    let aware = cfg.train_config(Mode::Aware);
    let rows = experiments::run_sweep(&cfg.sweep, &aware, &train_set, &test_set, baseline, progress)?;
    let tiling_of = |r: &SweepRow| output::tiling_label(&Some(experiments::tiling_for(&cfg.layer_dims, (r.tile_m, r.tile_n))));
    let protocol = cfg.sweep.protocol.to_string();
    let disc = output::discretization_label(cfg.discretization);
    let csv_rows = rows.iter().map(|r| {
        vec![
            r.rs_ratio.to_string(),
            r.rneu_ratio.to_string(),
            r.k_sigma.to_string(),
            r.sigma_unit.to_string(),
            r.tile_m.to_string(),
            r.tile_n.to_string(),
            r.mode.to_string(),
            protocol.clone(),
            r.repetition.to_string(),
            r.seed.to_string(),
            r.ideal_accuracy.to_string(),
            r.accuracy.to_string(),
            r.degradation.to_string(),
            cfg.clip_percentile.to_string(),
            disc.to_string(),
            tiling_of(r),
            commit.clone(),
        ]
    });
    let path = out.join("sweep.csv");
    write_csv(&path, SWEEP_HEADER, csv_rows)?;
    let summary = experiments::summarize(&rows);
    let summary_path = out.join("sweep_summary.csv");
    write_csv(
        &summary_path,
        &[
            "rs_ratio",
            "rneu_ratio",
            "k_sigma",
            "m",
            "n",
            "mode",
            "repetitions",
            "mean_accuracy",
            "mean_degradation",
            "std_degradation",
            "min_degradation",
            "max_degradation",
            "seed",
            "commit",
        ],
        summary.iter().map(|s| {
            vec![
                s.rs_ratio.to_string(),
                s.rneu_ratio.to_string(),
                s.k_sigma.to_string(),
                s.tile_m.to_string(),
                s.tile_n.to_string(),
                s.mode.to_string(),
                s.repetitions.to_string(),
                s.mean_accuracy.to_string(),
                s.mean_degradation.to_string(),
                s.std_degradation.to_string(),
                s.min_degradation.to_string(),
                s.max_degradation.to_string(),
                cfg.seed.to_string(),
                commit.clone(),
            ]
        }),
    )?;
    println!("{} rows written to {}", rows.len(), path.display());
    let mut m = Manifest::new("sweep", &commit, cfg);
    m.outputs = vec![path, summary_path];
    m.elapsed_seconds = start.elapsed().as_secs_f64();
    m.write(&out.join("sweep_manifest.json"))
}

pub fn cmd_validate(cfg: &RunConfig, net: &Network, out: &Path) -> Result<()> {
    let start = Instant::now();
    let commit = commit_id();
    let v = &cfg.validate;
    let test_set = cfg.data.test()?;
    if v.n_images == 0 || v.n_images > test_set.len() {
        return Err(Error::Config(format!("n_images must be in 1..={}, got {}", test_set.len(), v.n_images)));
    }
    let images = test_set.head(v.n_images);
    let inputs = experiments::layer_inputs(net, images.images.view(), v.layer)?;
    let base = TrainConfig { tiling: None, ..cfg.train_config(Mode::Aware) };
    let points = experiments::nrmsd_grid(net, inputs.view(), v.layer, &base, &v.rs_ratios, &v.rneu_ratios)?;

    let mut summary = Vec::new();
    let mut currents = Vec::new();
    let mut hist = Vec::new();
    for p in &points {
        println!("rs {:<8} rneu {:<8} NRMSD {:.3e}  residual {:.1e}", p.rs_ratio, p.rneu_ratio, p.nrmsd, p.max_residual);
        let cfg_point = base.with_nonideal(crate::tech::NonIdealityConfig { rs_ratio: p.rs_ratio, rneu_ratio: p.rneu_ratio, ..base.nonideal });
        let mut r = vec![
            v.layer.to_string(),
            p.images.to_string(),
            p.node_count.to_string(),
            p.nrmsd.to_string(),
            p.max_abs_error.to_string(),
            p.max_residual.to_string(),
            p.condition_estimate.to_string(),
            "range".into(),
        ];
        r.extend(provenance(&cfg_point, &commit));
        summary.push(r);
        for (j, (m, o)) in p.model_mean.iter().zip(&p.oracle_mean).enumerate() {
            currents.push(vec![p.rs_ratio.to_string(), p.rneu_ratio.to_string(), j.to_string(), m.to_string(), o.to_string()]);
        }
        for (source, values) in [("model", &p.model_mean), ("oracle", &p.oracle_mean)] {
            for (lo, hi, count) in histogram(values.as_slice().expect("contiguous"), v.histogram_bins) {
                hist.push(vec![
                    p.rs_ratio.to_string(),
                    p.rneu_ratio.to_string(),
                    source.to_string(),
                    lo.to_string(),
                    hi.to_string(),
                    count.to_string(),
                ]);
            }
        }
    }
    let paths = [out.join("validate.csv"), out.join("validate_currents.csv"), out.join("validate_histogram.csv")];
    write_csv(
        &paths[0],
        &header(&["layer", "images", "nodes", "nrmsd", "max_abs_error", "max_residual", "condition_estimate", "nrmsd_normalizer"]),
        summary,
    )?;
    write_csv(&paths[1], &["rs_ratio", "rneu_ratio", "neuron", "model_mean_current", "oracle_mean_current"], currents)?;
    write_csv(&paths[2], &["rs_ratio", "rneu_ratio", "source", "bin_low", "bin_high", "count"], hist)?;
    let mut m = Manifest::new("validate", &commit, cfg);
    m.outputs = paths.to_vec();
    m.elapsed_seconds = start.elapsed().as_secs_f64();
    m.write(&out.join("validate_manifest.json"))
}

pub fn cmd_export_netlist(cfg: &RunConfig, net: &Network, layer: usize, image: usize, normalized: bool, path: &Path) -> Result<()> {
    let test_set = cfg.data.test()?;
    if image >= test_set.len() {
        return Err(Error::Config(format!("image {image} out of range, test set has {}", test_set.len())));
    }
    let hw = cfg.train_config(Mode::Aware);
    let inputs = experiments::layer_inputs(net, test_set.images.slice(ndarray::s![image..=image, ..]), layer)?;
    let (split, _) = experiments::layer_split(net, layer, &hw)?;
    let ohms = if normalized { 1.0 } else { cfg.technology.ohms_per_unit() };
    let text = export_netlist(&split, &hw.nonideal, inputs.row(0), ohms)?;
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, text)?;
    println!("netlist written to {}", path.display());
    Ok(())
}
