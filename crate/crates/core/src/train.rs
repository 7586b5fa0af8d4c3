//! Fully connected sigmoid networks trained either with plain
//! backpropagation or with the non-ideal crossbar model in the loop.
//!
//! Master weights stay in full precision. In aware mode every layer is
//! re-derived from them before each step: quantized, split onto the two
//! arrays, shifted by the variation corner, and folded with its degradation
//! factors into an effective matrix (see [`EffectiveCrossbar`]). The layer
//! pre-activation is `z = scale * (a . effective)`, where `scale` is the
//! quantizer clip value that mapped `|w| = scale` onto `G_high`.
//!
//! Gradients in aware mode are the exact derivatives of that forward model
//! with respect to the programmed conductances, including how every
//! conductance loads the `beta` and `gamma` factors of its tile. They reach
//! the master weights through a straight-through estimator: the
//! discretization and variation clamp are treated as identity inside the
//! clip range and as constant outside it.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{self, Dataset, CLASSES};
use crate::error::{Error, Result};
use crate::tech::{
    apply_variation, map_weights, split_signed, Discretization, NonIdealityConfig, QuantizedWeights,
    SplitConductance, DEFAULT_CLIP_PERCENTILE,
};
use crate::xbar::{degradation_factors, DegradationFactors, EffectiveCrossbar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Ideal,
    Aware,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ideal" => Ok(Mode::Ideal),
            "aware" => Ok(Mode::Aware),
            other => Err(Error::Config(format!("unknown mode `{other}` (expected ideal or aware)"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Ideal => "ideal",
            Mode::Aware => "aware",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Sigmoid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: Mode,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub nonideal: NonIdealityConfig,
    /// Physical crossbar size `(m, n)` per layer; `None` maps each layer
    /// onto a single crossbar.
    pub tiling: Option<Vec<(usize, usize)>>,
    pub clip_percentile: f64,
    pub discretization: Discretization,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::ideal()
    }
}

impl TrainConfig {
    /// Plain backpropagation on MNIST-sized sigmoid/MSE networks.
    pub fn ideal() -> Self {
        TrainConfig {
            mode: Mode::Ideal,
            epochs: 20,
            batch_size: 10,
            learning_rate: 1.0,
            seed: 1,
            nonideal: NonIdealityConfig::ideal(),
            tiling: None,
            clip_percentile: DEFAULT_CLIP_PERCENTILE,
            discretization: Discretization::FourBit,
        }
    }

    /// Technology-aware fine-tuning at the given hardware corner. The
    /// degraded forward path shrinks gradients, hence the larger step.
    pub fn aware(nonideal: NonIdealityConfig) -> Self {
        TrainConfig { mode: Mode::Aware, epochs: 4, batch_size: 100, learning_rate: 5.0, nonideal, ..Self::ideal() }
    }

    /// Same hardware settings evaluated in the given mode.
    pub fn with_mode(&self, mode: Mode) -> Self {
        TrainConfig { mode, ..self.clone() }
    }

    pub fn with_tiling(&self, tiling: Option<Vec<(usize, usize)>>) -> Self {
        TrainConfig { tiling, ..self.clone() }
    }

    pub fn with_nonideal(&self, nonideal: NonIdealityConfig) -> Self {
        TrainConfig { nonideal, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be > 0, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.clip_percentile > 0.0 && self.clip_percentile <= 100.0) {
            return Err(Error::Config(format!("clip_percentile must be in (0, 100], got {}", self.clip_percentile)));
        }
        self.nonideal.validate()
    }

    fn hardware(&self) -> HardwareKey {
        HardwareKey {
            nonideal: self.nonideal,
            tiling: self.tiling.clone(),
            clip_percentile: self.clip_percentile,
            discretization: self.discretization,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct HardwareKey {
    nonideal: NonIdealityConfig,
    tiling: Option<Vec<(usize, usize)>>,
    clip_percentile: f64,
    discretization: Discretization,
}

/// Device-side image of one layer.
#[derive(Debug, Clone)]
pub struct LayerShadow {
    pub quantized: QuantizedWeights,
    pub crossbar: EffectiveCrossbar,
    nonideal: NonIdealityConfig,
    /// `scale * effective`, the matrix the layer multiplies by.
    matrix: Array2<f64>,
}

impl LayerShadow {
    fn derive(weights: &Array2<f64>, hw: &HardwareKey, tile: Option<(usize, usize)>) -> Result<Self> {
        let quantized = map_weights(weights.view(), hw.clip_percentile, hw.discretization)?;
        let split = apply_variation(&split_signed(&quantized), &hw.nonideal);
        let crossbar = EffectiveCrossbar::new(split, &hw.nonideal, tile)?;
        let matrix = crossbar.effective() * quantized.scale;
        Ok(LayerShadow { quantized, crossbar, nonideal: hw.nonideal, matrix })
    }

    /// Programmed conductances after variation.
    pub fn split(&self) -> &SplitConductance {
        &self.crossbar.split
    }

    /// Degradation factors of the layer taken as one untiled crossbar.
    pub fn factors(&self) -> DegradationFactors {
        degradation_factors(self.split(), &self.nonideal)
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }
}

#[derive(Debug, Clone)]
struct Shadow {
    version: u64,
    hardware: HardwareKey,
    layers: Vec<LayerShadow>,
}

#[derive(Debug, Clone)]
pub struct Network {
    layer_dims: Vec<usize>,
    /// `fan_in x fan_out` per layer, rows map onto crossbar rows.
    weights: Vec<Array2<f64>>,
    activations: Vec<Activation>,
    version: u64,
    shadow: Option<Shadow>,
}

impl Network {
    /// Uniform initialization in `[-r, r]`, `r = sqrt(6 / (fan_in + fan_out))`.
    pub fn new(layer_dims: &[usize], seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::check_dims(layer_dims)?;
        let weights = layer_dims
            .windows(2)
            .map(|d| {
                let r = (6.0 / (d[0] + d[1]) as f64).sqrt();
                let dist = Uniform::new_inclusive(-r, r);
                Array2::from_shape_fn((d[0], d[1]), |_| dist.sample(&mut rng))
            })
            .collect();
        Self::from_weights(weights)
    }

    fn check_dims(layer_dims: &[usize]) -> Result<()> {
        if layer_dims.len() < 2 || layer_dims.contains(&0) {
            return Err(Error::Config(format!("layer_dims must list at least two positive sizes, got {layer_dims:?}")));
        }
        Ok(())
    }

    pub fn from_weights(weights: Vec<Array2<f64>>) -> Result<Self> {
        let mut layer_dims = vec![weights.first().map_or(0, |w| w.nrows())];
        for w in &weights {
            if w.nrows() != *layer_dims.last().unwrap() {
                return Err(Error::Dimension(format!("layer expects {} inputs, previous layer gives {}", w.nrows(), layer_dims.last().unwrap())));
            }
            if w.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("network weights"));
            }
            layer_dims.push(w.ncols());
        }
        Self::check_dims(&layer_dims)?;
        let activations = vec![Activation::Sigmoid; weights.len()];
        Ok(Network { layer_dims, weights, activations, version: 0, shadow: None })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn layers(&self) -> usize {
        self.weights.len()
    }

    /// Applies `f` to the master weights and invalidates the shadow state.
    pub fn update_weights(&mut self, f: impl FnOnce(&mut [Array2<f64>])) {
        f(&mut self.weights);
        self.version += 1;
    }

    /// Re-derives the device image of every layer from the master weights.
    pub fn sync_shadow(&mut self, cfg: &TrainConfig) -> Result<()> {
        let hardware = cfg.hardware();
        let layers = build_shadow(&self.weights, &hardware)?;
        self.shadow = Some(Shadow { version: self.version, hardware, layers });
        Ok(())
    }

    /// Shadow layers, if they are current for `cfg`.
    pub fn shadow(&self, cfg: &TrainConfig) -> Result<&[LayerShadow]> {
        match &self.shadow {
            Some(s) if s.version == self.version && s.hardware == cfg.hardware() => Ok(&s.layers),
            Some(s) => Err(Error::StaleShadow(s.layers.len().min(self.layers()) - 1)),
            None => Err(Error::StaleShadow(0)),
        }
    }

    /// Quantizer scale of every layer for the given clip percentile.
    pub fn scales(&self, clip_percentile: f64) -> Result<Vec<f64>> {
        self.weights.iter().map(|w| crate::tech::clip_scale(w.view(), clip_percentile)).collect()
    }
}

fn build_shadow(weights: &[Array2<f64>], hw: &HardwareKey) -> Result<Vec<LayerShadow>> {
    if let Some(t) = &hw.tiling {
        if t.len() != weights.len() {
            return Err(Error::Config(format!("tiling lists {} layers, network has {}", t.len(), weights.len())));
        }
    }
    weights
        .iter()
        .enumerate()
        .map(|(l, w)| LayerShadow::derive(w, hw, hw.tiling.as_ref().map(|t| t[l])))
        .collect()
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Sigmoid derivative expressed through its output `a = sigmoid(x)`.
#[inline]
pub fn sigmoid_deriv_from_output(a: f64) -> f64 {
    a * (1.0 - a)
}

/// `0.5 * sum (y - a)^2`.
pub fn loss(a_out: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
    0.5 * a_out.iter().zip(y).map(|(a, y)| (y - a).powi(2)).sum::<f64>()
}

pub fn one_hot(label: u8) -> Array1<f64> {
    let mut y = Array1::zeros(CLASSES);
    y[label as usize] = 1.0;
    y
}

fn one_hot_rows(labels: &[u8]) -> Array2<f64> {
    let mut y = Array2::zeros((labels.len(), CLASSES));
    for (mut row, &l) in y.outer_iter_mut().zip(labels) {
        row[l as usize] = 1.0;
    }
    y
}

/// Pre-activations and activations of every layer for a batch of inputs
/// (one sample per row).
#[derive(Debug, Clone)]
pub struct Records {
    pub input: Array2<f64>,
    pub z: Vec<Array2<f64>>,
    pub a: Vec<Array2<f64>>,
}

impl Records {
    pub fn output(&self) -> &Array2<f64> {
        self.a.last().expect("network has at least one layer")
    }
}

fn layer_matrices<'a>(net: &'a Network, cfg: &TrainConfig) -> Result<Vec<&'a Array2<f64>>> {
    match cfg.mode {
        Mode::Ideal => Ok(net.weights.iter().collect()),
        Mode::Aware => Ok(net.shadow(cfg)?.iter().map(LayerShadow::matrix).collect()),
    }
}

fn propagate(mats: &[&Array2<f64>], x: ArrayView2<f64>) -> Result<Records> {
    if x.ncols() != mats[0].nrows() {
        return Err(Error::Dimension(format!("input has {} features, network expects {}", x.ncols(), mats[0].nrows())));
    }
    let mut z = Vec::with_capacity(mats.len());
    let mut a: Vec<Array2<f64>> = Vec::with_capacity(mats.len());
    for m in mats {
        let zl = a.last().map_or_else(|| x.dot(*m), |prev| prev.dot(*m));
        a.push(zl.mapv(sigmoid));
        z.push(zl);
    }
    Ok(Records { input: x.to_owned(), z, a })
}

/// Forward pass of one input vector. Aware mode needs a synchronized shadow.
pub fn forward_pass(net: &Network, x: ArrayView1<f64>, cfg: &TrainConfig) -> Result<Records> {
    forward_batch(net, x.insert_axis(Axis(0)), cfg)
}

pub fn forward_batch(net: &Network, x: ArrayView2<f64>, cfg: &TrainConfig) -> Result<Records> {
    propagate(&layer_matrices(net, cfg)?, x)
}

/// `dL/dz` for every layer, summed loss over the batch.
fn deltas(mats: &[&Array2<f64>], rec: &Records, y: ArrayView2<f64>) -> Result<Vec<Array2<f64>>> {
    if rec.z.len() != mats.len() {
        return Err(Error::Dimension(format!("records cover {} layers, network has {}", rec.z.len(), mats.len())));
    }
    if y.dim() != rec.output().dim() {
        return Err(Error::Dimension(format!("targets {:?} vs outputs {:?}", y.dim(), rec.output().dim())));
    }
    let last = mats.len() - 1;
    let mut out = vec![Array2::zeros((0, 0)); mats.len()];
    out[last] = Zip::from(rec.output()).and(&y).map_collect(|&a, &y| (a - y) * sigmoid_deriv_from_output(a));
    for l in (0..last).rev() {
        let back = out[l + 1].dot(&mats[l + 1].t());
        out[l] = Zip::from(&back).and(&rec.a[l]).map_collect(|&b, &a| b * sigmoid_deriv_from_output(a));
    }
    Ok(out)
}

fn layer_input(rec: &Records, l: usize) -> ArrayView2<'_, f64> {
    if l == 0 {
        rec.input.view()
    } else {
        rec.a[l - 1].view()
    }
}

/// Gradients of the summed loss with respect to every layer's
/// programmed conductances `(g_pos, g_neg)`, aware mode only.
pub fn conductance_gradients(
    net: &Network,
    rec: &Records,
    y: ArrayView2<f64>,
    cfg: &TrainConfig,
) -> Result<Vec<(Array2<f64>, Array2<f64>)>> {
    let shadow = net.shadow(cfg)?;
    let mats: Vec<_> = shadow.iter().map(LayerShadow::matrix).collect();
    let d = deltas(&mats, rec, y)?;
    shadow
        .iter()
        .enumerate()
        .map(|(l, s)| {
            let grad_eff = layer_input(rec, l).t().dot(&d[l]) * s.quantized.scale;
            s.crossbar.conductance_gradients(grad_eff.view())
        })
        .collect()
}

/// Gradients of the summed loss with respect to the master weights.
pub fn backward_batch(net: &Network, rec: &Records, y: ArrayView2<f64>, cfg: &TrainConfig) -> Result<Vec<Array2<f64>>> {
    let mats = layer_matrices(net, cfg)?;
    let d = deltas(&mats, rec, y)?;
    match cfg.mode {
        Mode::Ideal => Ok((0..mats.len()).map(|l| layer_input(rec, l).t().dot(&d[l])).collect()),
        Mode::Aware => {
            let shadow = net.shadow(cfg)?;
            let mut grads = Vec::with_capacity(mats.len());
            for (l, s) in shadow.iter().enumerate() {
                let scale = s.quantized.scale;
                let grad_eff = layer_input(rec, l).t().dot(&d[l]) * scale;
                let (d_pos, d_neg) = s.crossbar.conductance_gradients(grad_eff.view())?;
                let g = Zip::from(&net.weights[l]).and(&d_pos).and(&d_neg).map_collect(|&w, &dp, &dn| {
                    if w.abs() > scale {
                        0.0
                    } else if w >= 0.0 {
                        dp / scale
                    } else {
                        -dn / scale
                    }
                });
                grads.push(g);
            }
            Ok(grads)
        }
    }
}

pub fn backward_pass(net: &Network, rec: &Records, y: ArrayView1<f64>, cfg: &TrainConfig) -> Result<Vec<Array2<f64>>> {
    backward_batch(net, rec, y.insert_axis(Axis(0)), cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-sample loss over the epoch.
    pub loss: f64,
    /// Accuracy on the training batches as they were seen during the epoch.
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
}

impl History {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }
}

fn argmax(row: ArrayView1<f64>) -> usize {
    row.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0
}

fn correct(out: &Array2<f64>, labels: &[u8]) -> usize {
    out.outer_iter().zip(labels).filter(|(row, &l)| argmax(row.view()) == l as usize).count()
}

pub(crate) fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed ^ (epoch as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// One optimizer step on a batch. Returns the summed loss and number of
/// correct predictions.
pub fn train_step(net: &mut Network, x: ArrayView2<f64>, labels: &[u8], cfg: &TrainConfig) -> Result<(f64, usize)> {
    if cfg.mode == Mode::Aware {
        net.sync_shadow(cfg)?;
    }
    let y = one_hot_rows(labels);
    let rec = forward_batch(net, x, cfg)?;
    let overflowed = rec.z.iter().any(|z| z.iter().any(|v| !v.is_finite()));
    let batch_loss = if overflowed { f64::NAN } else { 0.5 * (rec.output() - &y).mapv(|e| e * e).sum() };
    let hits = correct(rec.output(), labels);
    let grads = backward_batch(net, &rec, y.view(), cfg)?;
    let step = -cfg.learning_rate / labels.len() as f64;
    net.update_weights(|ws| {
        for (w, g) in ws.iter_mut().zip(&grads) {
            w.scaled_add(step, g);
        }
    });
    Ok((batch_loss, hits))
}

/// Mini-batch gradient descent. `test` is evaluated after every epoch
/// under the training configuration.
pub fn train(net: &mut Network, train_set: &Dataset, test: Option<&Dataset>, cfg: &TrainConfig) -> Result<History> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if train_set.images.ncols() != net.layer_dims[0] || *net.layer_dims.last().unwrap() != CLASSES {
        return Err(Error::Dimension(format!(
            "network {:?} does not fit {} features and {CLASSES} classes",
            net.layer_dims,
            train_set.images.ncols()
        )));
    }
    let mut history = History::default();
    for epoch in 0..cfg.epochs {
        let (mut total_loss, mut hits) = (0.0, 0usize);
        for (b, idx) in data::batches(train_set.len(), cfg.batch_size, epoch_seed(cfg.seed, epoch)).iter().enumerate() {
            let (x, labels) = train_set.select(idx);
            let (l, h) = train_step(net, x.view(), &labels, cfg)?;
            if !l.is_finite() || net.weights.iter().any(|w| w.iter().any(|v| !v.is_finite())) {
                return Err(Error::Diverged { epoch, batch: b, loss: l });
            }
            total_loss += l;
            hits += h;
        }
        let test_accuracy = test.map(|t| evaluate(net, t, cfg)).transpose()?;
        history.epochs.push(EpochRecord {
            epoch: epoch + 1,
            loss: total_loss / train_set.len() as f64,
            train_accuracy: 100.0 * hits as f64 / train_set.len() as f64,
            test_accuracy,
        });
    }
    if cfg.mode == Mode::Aware {
        net.sync_shadow(cfg)?;
    }
    Ok(history)
}

const EVAL_CHUNK: usize = 1000;

/// Outputs of the whole dataset under `cfg`, computed on a private
/// snapshot of the device image so the network is not mutated.
pub fn predict(net: &Network, images: ArrayView2<f64>, cfg: &TrainConfig) -> Result<Array2<f64>> {
    let shadow;
    let mats: Vec<&Array2<f64>> = match cfg.mode {
        Mode::Ideal => net.weights.iter().collect(),
        Mode::Aware => match net.shadow(cfg) {
            Ok(s) => s.iter().map(LayerShadow::matrix).collect(),
            Err(_) => {
                shadow = build_shadow(&net.weights, &cfg.hardware())?;
                shadow.iter().map(LayerShadow::matrix).collect()
            }
        },
    };
    let mut out = Array2::zeros((images.nrows(), *net.layer_dims.last().unwrap()));
    for start in (0..images.nrows()).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(images.nrows());
        let rec = propagate(&mats, images.slice(ndarray::s![start..end, ..]))?;
        out.slice_mut(ndarray::s![start..end, ..]).assign(rec.output());
    }
    Ok(out)
}

/// Test accuracy in percent.
pub fn evaluate(net: &Network, ds: &Dataset, cfg: &TrainConfig) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let out = predict(net, ds.images.view(), cfg)?;
    Ok(100.0 * correct(&out, &ds.labels) as f64 / ds.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    /// `baseline - accuracy`, in percentage points.
    pub degradation: f64,
}

pub fn evaluate_against(net: &Network, ds: &Dataset, cfg: &TrainConfig, ideal_baseline: f64) -> Result<Evaluation> {
    let accuracy = evaluate(net, ds, cfg)?;
    Ok(Evaluation { accuracy, degradation: ideal_baseline - accuracy })
}
