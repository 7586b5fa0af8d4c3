//! Experiment drivers shared by the command-line front end, the examples
//! and the acceptance suite: model-versus-circuit agreement over a grid of
//! hardware corners, and accuracy sweeps over corners and crossbar sizes.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::oracle::{nrmsd, CircuitOracle};
use crate::tech::{apply_variation, map_weights, split_signed, NonIdealityConfig, SplitConductance};
use crate::train::{evaluate, forward_batch, train, History, Mode, Network, TrainConfig};
use crate::xbar;

/// Per-layer crossbar sizes for a network mapped onto `(m, n)` crossbars.
/// The first layer uses `(m, n)`; every later layer takes `n` rows (one
/// physical column group of the previous layer) and at most `n` columns.
/// Sizes are clamped to the layer dimensions.
pub fn tiling_for(layer_dims: &[usize], (m, n): (usize, usize)) -> Vec<(usize, usize)> {
    layer_dims
        .windows(2)
        .enumerate()
        .map(|(l, d)| if l == 0 { (m.min(d[0]), n.min(d[1])) } else { (n.min(d[0]), n.min(d[1])) })
        .collect()
}

/// Seed of repetition `rep`; repetition 0 keeps the base seed.
pub fn repetition_seed(seed: u64, rep: usize) -> u64 {
    seed.wrapping_add((rep as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Ideal-mode activations that feed layer `layer` (the images themselves
/// for layer 0).
pub fn layer_inputs(net: &Network, images: ArrayView2<f64>, layer: usize) -> Result<Array2<f64>> {
    if layer >= net.layers() {
        return Err(Error::Config(format!("layer {layer} does not exist, network has {}", net.layers())));
    }
    if layer == 0 {
        return Ok(images.to_owned());
    }
    let rec = forward_batch(net, images, &TrainConfig::ideal())?;
    Ok(rec.a[layer - 1].clone())
}

/// Programmed conductances of one layer at the corner and quantizer
/// settings of `cfg`.
pub fn layer_split(net: &Network, layer: usize, cfg: &TrainConfig) -> Result<(SplitConductance, f64)> {
    let w = net
        .weights()
        .get(layer)
        .ok_or_else(|| Error::Config(format!("layer {layer} does not exist, network has {}", net.layers())))?;
    let q = map_weights(w.view(), cfg.clip_percentile, cfg.discretization)?;
    Ok((apply_variation(&split_signed(&q), &cfg.nonideal), q.scale))
}

#[derive(Debug, Clone, Serialize)]
pub struct NrmsdPoint {
    pub rs_ratio: f64,
    pub rneu_ratio: f64,
    pub k_sigma: i8,
    pub nrmsd: f64,
    pub max_abs_error: f64,
    pub max_residual: f64,
    pub condition_estimate: f64,
    pub node_count: usize,
    pub images: usize,
    /// Mean output current of every neuron over the inputs, model side.
    #[serde(skip)]
    pub model_mean: Array1<f64>,
    #[serde(skip)]
    pub oracle_mean: Array1<f64>,
}

/// Compares the analytical crossbar model with the circuit solution on
/// the per-neuron mean currents over all rows of `inputs`.
pub fn nrmsd_point(split: &SplitConductance, nonideal: &NonIdealityConfig, inputs: ArrayView2<f64>) -> Result<NrmsdPoint> {
    if inputs.nrows() == 0 {
        return Err(Error::EmptyDataset);
    }
    let oracle = CircuitOracle::new(split, nonideal)?;
    let mut model = Array2::zeros((inputs.nrows(), split.cols()));
    let mut circuit = Array2::zeros((inputs.nrows(), split.cols()));
    let mut max_residual = 0f64;
    for (k, a) in inputs.outer_iter().enumerate() {
        model.row_mut(k).assign(&xbar::forward(split, nonideal, a)?);
        let sol = oracle.solve(a)?;
        max_residual = max_residual.max(sol.residual);
        circuit.row_mut(k).assign(&sol.currents);
    }
    let model_mean = model.mean_axis(Axis(0)).expect("at least one input");
    let oracle_mean = circuit.mean_axis(Axis(0)).expect("at least one input");
    let max_abs_error = model_mean.iter().zip(&oracle_mean).map(|(m, o)| (m - o).abs()).fold(0.0, f64::max);
    Ok(NrmsdPoint {
        rs_ratio: nonideal.rs_ratio,
        rneu_ratio: nonideal.rneu_ratio,
        k_sigma: nonideal.k_sigma,
        nrmsd: nrmsd(model_mean.view(), oracle_mean.view())?,
        max_abs_error,
        max_residual,
        condition_estimate: oracle.condition_estimate(),
        node_count: oracle.node_count(),
        images: inputs.nrows(),
        model_mean,
        oracle_mean,
    })
}

/// [`nrmsd_point`] for one layer of `net` over every `(rs, rneu)` pair.
/// Variation level and quantizer settings come from `base`.
pub fn nrmsd_grid(
    net: &Network,
    inputs: ArrayView2<f64>,
    layer: usize,
    base: &TrainConfig,
    rs_ratios: &[f64],
    rneu_ratios: &[f64],
) -> Result<Vec<NrmsdPoint>> {
    let mut out = Vec::with_capacity(rs_ratios.len() * rneu_ratios.len());
    for &rs in rs_ratios {
        for &rneu in rneu_ratios {
            let nonideal = NonIdealityConfig { rs_ratio: rs, rneu_ratio: rneu, ..base.nonideal };
            nonideal.validate()?;
            let (split, _) = layer_split(net, layer, &base.with_nonideal(nonideal))?;
            out.push(nrmsd_point(&split, &nonideal, inputs)?);
        }
    }
    Ok(out)
}

/// Technology-aware fine-tuning of a copy of `baseline`.
pub fn aware_finetune(
    baseline: &Network,
    train_set: &Dataset,
    test: Option<&Dataset>,
    cfg: &TrainConfig,
) -> Result<(Network, History)> {
    let mut net = baseline.clone();
    let history = train(&mut net, train_set, test, &cfg.with_mode(Mode::Aware))?;
    Ok((net, history))
}

/// How aware-trained networks are evaluated across variation corners.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariationProtocol {
    /// Fine-tune separately at every `k_sigma` corner.
    PerCorner,
    /// Fine-tune once at `k_sigma = 0` and evaluate across corners.
    Nominal,
}

impl std::str::FromStr for VariationProtocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-corner" => Ok(VariationProtocol::PerCorner),
            "nominal" => Ok(VariationProtocol::Nominal),
            other => Err(Error::Config(format!("unknown variation protocol `{other}` (expected per-corner or nominal)"))),
        }
    }
}

impl std::fmt::Display for VariationProtocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            VariationProtocol::PerCorner => "per-corner",
            VariationProtocol::Nominal => "nominal",
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSpec {
    pub rs_ratios: Vec<f64>,
    pub rneu_ratios: Vec<f64>,
    pub k_sigmas: Vec<i8>,
    /// First-layer crossbar sizes, expanded per layer by [`tiling_for`].
    pub tile_sizes: Vec<(usize, usize)>,
    pub repetitions: usize,
    /// Training modes to compare; ideal means evaluating the baseline as is.
    pub modes: Vec<Mode>,
    pub protocol: VariationProtocol,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        let empty = [
            ("rs_ratios", self.rs_ratios.is_empty()),
            ("rneu_ratios", self.rneu_ratios.is_empty()),
            ("k_sigmas", self.k_sigmas.is_empty()),
            ("tile_sizes", self.tile_sizes.is_empty()),
            ("modes", self.modes.is_empty()),
        ];
        if let Some((name, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(Error::Config(format!("sweep grid is empty: {name} has no entries")));
        }
        if self.repetitions == 0 {
            return Err(Error::Config("sweep repetitions must be at least 1".into()));
        }
        if self.tile_sizes.iter().any(|&(m, n)| m == 0 || n == 0) {
            return Err(Error::Config("tile sizes must be positive".into()));
        }
        for &rs in &self.rs_ratios {
            for &rneu in &self.rneu_ratios {
                for &k in &self.k_sigmas {
                    NonIdealityConfig::new(rs, rneu, k)?;
                }
            }
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.rs_ratios.len() * self.rneu_ratios.len() * self.k_sigmas.len() * self.tile_sizes.len() * self.modes.len()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub rs_ratio: f64,
    pub rneu_ratio: f64,
    pub k_sigma: i8,
    pub sigma_unit: f64,
    pub tile_m: usize,
    pub tile_n: usize,
    pub mode: Mode,
    pub repetition: usize,
    pub seed: u64,
    pub ideal_accuracy: f64,
    pub accuracy: f64,
    pub degradation: f64,
}

/// Runs the full factorial grid. `baseline(rep, seed)` supplies the
/// ideally trained network of each repetition; aware cells fine-tune a copy
/// of it with `aware` (corner and tiling are filled in per cell).
pub fn run_sweep(
    spec: &SweepSpec,
    aware: &TrainConfig,
    train_set: &Dataset,
    test: &Dataset,
    mut baseline: impl FnMut(usize, u64) -> Result<Network>,
    mut progress: impl FnMut(&SweepRow),
) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let mut rows = Vec::with_capacity(spec.cells() * spec.repetitions);
    for rep in 0..spec.repetitions {
        let seed = repetition_seed(aware.seed, rep);
        let net = baseline(rep, seed)?;
        let ideal_accuracy = evaluate(&net, test, &aware.with_mode(Mode::Ideal))?;
        for &tile in &spec.tile_sizes {
            let tiling = Some(tiling_for(net.layer_dims(), tile));
            for &rs in &spec.rs_ratios {
                for &rneu in &spec.rneu_ratios {
                    let corner = |k: i8| NonIdealityConfig { rs_ratio: rs, rneu_ratio: rneu, k_sigma: k, ..aware.nonideal };
                    let cell = |k: i8, mode: Mode| TrainConfig { seed, tiling: tiling.clone(), nonideal: corner(k), mode, ..aware.clone() };
                    for &mode in &spec.modes {
                        let nominal = match (mode, spec.protocol) {
                            (Mode::Aware, VariationProtocol::Nominal) => {
                                Some(aware_finetune(&net, train_set, None, &cell(0, Mode::Aware))?.0)
                            }
                            _ => None,
                        };
                        for &k in &spec.k_sigmas {
                            let cfg = cell(k, Mode::Aware);
                            let accuracy = match (mode, &nominal) {
                                (Mode::Ideal, _) => evaluate(&net, test, &cfg)?,
                                (Mode::Aware, Some(tuned)) => evaluate(tuned, test, &cfg)?,
                                (Mode::Aware, None) => evaluate(&aware_finetune(&net, train_set, None, &cfg)?.0, test, &cfg)?,
                            };
                            let row = SweepRow {
                                rs_ratio: rs,
                                rneu_ratio: rneu,
                                k_sigma: k,
                                sigma_unit: cfg.nonideal.sigma_unit,
                                tile_m: tile.0,
                                tile_n: tile.1,
                                mode,
                                repetition: rep,
                                seed,
                                ideal_accuracy,
                                accuracy,
                                degradation: ideal_accuracy - accuracy,
                            };
                            progress(&row);
                            rows.push(row);
                        }
                    }
                }
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub rs_ratio: f64,
    pub rneu_ratio: f64,
    pub k_sigma: i8,
    pub tile_m: usize,
    pub tile_n: usize,
    pub mode: Mode,
    pub repetitions: usize,
    pub mean_accuracy: f64,
    pub mean_degradation: f64,
    /// Sample standard deviation of the degradation (0 for one repetition).
    pub std_degradation: f64,
    pub min_degradation: f64,
    pub max_degradation: f64,
}

/// Mean and spread over repetitions for every grid cell, in first-seen order.
pub fn summarize(rows: &[SweepRow]) -> Vec<SweepSummary> {
    type Key = (u64, u64, i8, usize, usize, Mode);
    let key = |r: &SweepRow| -> Key { (r.rs_ratio.to_bits(), r.rneu_ratio.to_bits(), r.k_sigma, r.tile_m, r.tile_n, r.mode) };
    let mut order: Vec<Key> = Vec::new();
    let mut groups: std::collections::HashMap<Key, Vec<&SweepRow>> = std::collections::HashMap::new();
    for r in rows {
        let k = key(r);
        groups.entry(k).or_insert_with(|| {
            order.push(k);
            Vec::new()
        });
        groups.get_mut(&k).expect("inserted above").push(r);
    }
    order
        .into_iter()
        .map(|k| {
            let g = &groups[&k];
            let n = g.len() as f64;
            let degs: Vec<f64> = g.iter().map(|r| r.degradation).collect();
            let mean_degradation = degs.iter().sum::<f64>() / n;
            let var = if g.len() > 1 { degs.iter().map(|d| (d - mean_degradation).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
            SweepSummary {
                rs_ratio: g[0].rs_ratio,
                rneu_ratio: g[0].rneu_ratio,
                k_sigma: g[0].k_sigma,
                tile_m: g[0].tile_m,
                tile_n: g[0].tile_n,
                mode: g[0].mode,
                repetitions: g.len(),
                mean_accuracy: g.iter().map(|r| r.accuracy).sum::<f64>() / n,
                mean_degradation,
                std_degradation: var.sqrt(),
                min_degradation: degs.iter().copied().fold(f64::INFINITY, f64::min),
                max_degradation: degs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect()
}
