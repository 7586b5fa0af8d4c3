//! Device technology profiles and the weight-to-conductance pipeline:
//! normalization, 4-bit discretization, signed splitting onto a positive
//! and a negative array, and chip-to-chip conductance variation.
//!
//! All conductances are normalized so that `G_high == 1`. The used
//! resistance window then spans `R_low = 1` to `R_high = 15`, and the
//! source and neuron resistances are expressed as multiples of `R_high`.

use ndarray::{Array2, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of nonzero conductance levels. The grid is `{0, 1/15, ..., 15/15}`.
pub const LEVELS: u8 = 15;

/// `R_high / R_low` ratio shared by every profile.
pub const WINDOW_RATIO: f64 = LEVELS as f64;

/// `R_high` in normalized units (`R_low == 1`).
pub const R_HIGH_NORM: f64 = WINDOW_RATIO;

/// Percentile of `|w|` used as the quantizer clip point unless overridden.
pub const DEFAULT_CLIP_PERCENTILE: f64 = 99.99;

/// Size of one sigma of chip-to-chip variation in normalized conductance.
pub const DEFAULT_SIGMA_UNIT: f64 = 2.0 / 15.0;

const RATIO_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TechnologyProfile {
    pub name: String,
    /// Full device range `(R_on, R_off)` in ohms, when the technology has one.
    pub device_range: Option<(f64, f64)>,
    /// Smallest resistance used for a synapse (maps to `G_high`).
    pub r_low: f64,
    /// Largest resistance used for a synapse (maps to `G_low`).
    pub r_high: f64,
    /// Placement of the used window inside the device range, `G_low = alpha / R_off`.
    pub alpha: Option<f64>,
    /// The window is a predictive estimate rather than a measured range and
    /// is exempt from the 15:1 ratio check.
    pub predictive: bool,
}

const PRESETS: &[(&str, Option<(f64, f64)>, f64, f64, bool)] = &[
    ("TiO2", Some((15e3, 2e6)), 40e3, 600e3, false),
    ("AgSi", Some((25e3, 10e6)), 100e3, 1.5e6, false),
    ("TaOx", Some((1e3, 1e6)), 20e3, 300e3, false),
    ("Spintronics", None, 40e3, 400e3, true),
    ("PCM", Some((10e3, 3e6)), 60e3, 900e3, false),
];

impl TechnologyProfile {
    /// Names of the built-in presets.
    pub fn preset_names() -> impl Iterator<Item = &'static str> {
        PRESETS.iter().map(|p| p.0)
    }

    /// Looks up a preset by name (case-insensitive, `Ag/Si` and `AgSi` both accepted).
    pub fn preset(name: &str) -> Result<Self> {
        let key = name.replace('/', "").to_ascii_lowercase();
        let (name, device_range, r_low, r_high, predictive) = PRESETS
            .iter()
            .find(|p| p.0.to_ascii_lowercase() == key)
            .copied()
            .ok_or_else(|| Error::UnknownPreset(name.to_string()))?;
        let profile = TechnologyProfile { predictive, ..Self::unchecked(name, device_range, r_low, r_high) };
        profile.validate()?;
        Ok(profile)
    }

    /// Builds and validates a custom profile. `alpha` is derived so that
    /// `G_low = 1 / R_high` sits at `alpha / R_off`.
    pub fn custom(
        name: &str,
        device_range: Option<(f64, f64)>,
        r_low: f64,
        r_high: f64,
    ) -> Result<Self> {
        let profile = Self::unchecked(name, device_range, r_low, r_high);
        profile.validate()?;
        Ok(profile)
    }

    fn unchecked(name: &str, device_range: Option<(f64, f64)>, r_low: f64, r_high: f64) -> Self {
        TechnologyProfile {
            name: name.to_string(),
            device_range,
            r_low,
            r_high,
            alpha: device_range.map(|(_, r_off)| r_off / r_high),
            predictive: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidProfile(format!("{}: {msg}", self.name)));
        if !(self.r_low.is_finite() && self.r_high.is_finite() && self.r_low > 0.0) {
            return bad("resistances must be positive and finite".into());
        }
        if self.r_low >= self.r_high {
            return bad(format!("r_low {} must be below r_high {}", self.r_low, self.r_high));
        }
        let ratio = self.r_high / self.r_low;
        if !self.predictive && ((ratio - WINDOW_RATIO) / WINDOW_RATIO).abs() > RATIO_TOL {
            return bad(format!("r_high / r_low is {ratio}, must be {WINDOW_RATIO}"));
        }
        if let Some((r_on, r_off)) = self.device_range {
            if !(r_on < self.r_low && self.r_high < r_off) {
                return bad(format!(
                    "used window ({}, {}) must lie strictly inside the device range ({r_on}, {r_off})",
                    self.r_low, self.r_high
                ));
            }
        }
        if let Some(alpha) = self.alpha {
            if !(alpha > 0.0) {
                return bad(format!("alpha must be positive, got {alpha}"));
            }
        }
        Ok(())
    }

    /// Expresses a physical resistance as a fraction of `R_high`.
    pub fn ratio_of(&self, ohms: f64) -> f64 {
        ohms / self.r_high
    }

    /// Ohms represented by one normalized resistance unit (`R_low`).
    pub fn ohms_per_unit(&self) -> f64 {
        self.r_low
    }
}

/// One hardware corner: source and neuron resistances relative to `R_high`
/// and the chip-to-chip variation level `k_sigma * sigma_unit`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonIdealityConfig {
    pub rs_ratio: f64,
    pub rneu_ratio: f64,
    pub k_sigma: i8,
    pub sigma_unit: f64,
}

impl Default for NonIdealityConfig {
    fn default() -> Self {
        Self::ideal()
    }
}

impl NonIdealityConfig {
    pub fn ideal() -> Self {
        NonIdealityConfig { rs_ratio: 0.0, rneu_ratio: 0.0, k_sigma: 0, sigma_unit: DEFAULT_SIGMA_UNIT }
    }

    pub fn new(rs_ratio: f64, rneu_ratio: f64, k_sigma: i8) -> Result<Self> {
        let cfg = NonIdealityConfig { rs_ratio, rneu_ratio, k_sigma, ..Self::ideal() };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_sigma_unit(mut self, sigma_unit: f64) -> Self {
        self.sigma_unit = sigma_unit;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rs_ratio.is_finite() && self.rs_ratio >= 0.0) {
            return Err(Error::Config(format!("rs_ratio must be >= 0, got {}", self.rs_ratio)));
        }
        if !(self.rneu_ratio.is_finite() && self.rneu_ratio >= 0.0) {
            return Err(Error::Config(format!("rneu_ratio must be >= 0, got {}", self.rneu_ratio)));
        }
        if !(-2..=2).contains(&self.k_sigma) {
            return Err(Error::Config(format!("k_sigma must be in [-2, 2], got {}", self.k_sigma)));
        }
        if !(self.sigma_unit.is_finite() && self.sigma_unit >= 0.0) {
            return Err(Error::Config(format!("sigma_unit must be >= 0, got {}", self.sigma_unit)));
        }
        Ok(())
    }

    /// Source resistance in normalized units.
    pub fn r_s(&self) -> f64 {
        self.rs_ratio * R_HIGH_NORM
    }

    /// Neuron resistance in normalized units.
    pub fn r_neu(&self) -> f64 {
        self.rneu_ratio * R_HIGH_NORM
    }

    /// Conductance offset applied to every present device.
    pub fn delta(&self) -> f64 {
        f64::from(self.k_sigma) * self.sigma_unit
    }

    pub fn is_ideal(&self) -> bool {
        self.rs_ratio == 0.0 && self.rneu_ratio == 0.0 && self.k_sigma == 0
    }
}

/// How real-valued weights are mapped onto normalized conductances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Discretization {
    /// Round onto the 16-point grid `{k/15}`.
    #[default]
    FourBit,
    /// Keep `min(|w| / scale, 1)` unrounded. Off-grid, used to isolate the
    /// resistive non-idealities from quantization loss.
    Off,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedWeights {
    pub magnitudes: Array2<f64>,
    pub signs: Array2<i8>,
    /// `|w|` that maps onto magnitude 1.
    pub scale: f64,
}

impl QuantizedWeights {
    /// `sign * magnitude * scale`, the weights the crossbar represents.
    pub fn dequantize(&self) -> Array2<f64> {
        Zip::from(&self.magnitudes)
            .and(&self.signs)
            .map_collect(|&m, &s| f64::from(s) * m * self.scale)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.magnitudes.dim()
    }
}

/// Linear-interpolated percentile of `|w|` over the nonzero entries.
pub fn clip_scale(weights: ArrayView2<f64>, clip_percentile: f64) -> Result<f64> {
    if !(clip_percentile > 0.0 && clip_percentile <= 100.0) {
        return Err(Error::Config(format!("clip percentile must be in (0, 100], got {clip_percentile}")));
    }
    let mut mags = Vec::with_capacity(weights.len());
    for &w in weights.iter() {
        if !w.is_finite() {
            return Err(Error::NonFinite("weight matrix"));
        }
        if w != 0.0 {
            mags.push(w.abs());
        }
    }
    if mags.is_empty() {
        return Err(Error::ZeroMatrix);
    }
    if clip_percentile == 100.0 {
        return Ok(mags.iter().copied().fold(0.0, f64::max));
    }
    let rank = clip_percentile / 100.0 * (mags.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let frac = rank - lo as f64;
    let (_, &mut lo_val, upper) = mags.select_nth_unstable_by(lo, f64::total_cmp);
    if frac == 0.0 || upper.is_empty() {
        return Ok(lo_val);
    }
    let hi_val = upper.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(lo_val + frac * (hi_val - lo_val))
}

/// 4-bit discretization with round-half-away-from-zero. Entries that round
/// to level 0 become open connections.
pub fn quantize(weights: ArrayView2<f64>, clip_percentile: f64) -> Result<QuantizedWeights> {
    map_weights(weights, clip_percentile, Discretization::FourBit)
}

pub fn map_weights(
    weights: ArrayView2<f64>,
    clip_percentile: f64,
    discretization: Discretization,
) -> Result<QuantizedWeights> {
    let scale = clip_scale(weights, clip_percentile)?;
    let levels = f64::from(LEVELS);
    let magnitudes = weights.mapv(|w| {
        let m = (w.abs() / scale).min(1.0);
        match discretization {
            Discretization::FourBit => (m * levels).round() / levels,
            Discretization::Off => m,
        }
    });
    let signs = Zip::from(&weights)
        .and(&magnitudes)
        .map_collect(|&w, &m| if m == 0.0 { 0 } else if w > 0.0 { 1 } else { -1 });
    Ok(QuantizedWeights { magnitudes, signs, scale })
}

/// A signed weight matrix programmed onto two nonnegative arrays.
///
/// `polarity` records where a device is programmed: `+1` on the positive
/// array, `-1` on the negative array, `0` for an open connection. A device
/// whose conductance was clamped to zero by variation keeps its polarity.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitConductance {
    pub g_pos: Array2<f64>,
    pub g_neg: Array2<f64>,
    pub polarity: Array2<i8>,
}

impl SplitConductance {
    /// Builds a split from raw arrays, marking every nonzero entry as a device.
    pub fn from_arrays(g_pos: Array2<f64>, g_neg: Array2<f64>) -> Result<Self> {
        if g_pos.dim() != g_neg.dim() {
            return Err(Error::Dimension(format!(
                "positive array {:?} vs negative array {:?}",
                g_pos.dim(),
                g_neg.dim()
            )));
        }
        let mut polarity = Array2::zeros(g_pos.dim());
        for ((p, &gp), &gn) in polarity.iter_mut().zip(g_pos.iter()).zip(g_neg.iter()) {
            if !(gp.is_finite() && gn.is_finite()) {
                return Err(Error::NonFinite("conductance"));
            }
            if gp < 0.0 || gn < 0.0 {
                return Err(Error::InvalidProfile("conductances must be nonnegative".into()));
            }
            if gp != 0.0 && gn != 0.0 {
                return Err(Error::InvalidProfile("positive and negative arrays overlap".into()));
            }
            *p = if gp > 0.0 { 1 } else if gn > 0.0 { -1 } else { 0 };
        }
        Ok(SplitConductance { g_pos, g_neg, polarity })
    }

    pub fn rows(&self) -> usize {
        self.g_pos.nrows()
    }

    pub fn cols(&self) -> usize {
        self.g_pos.ncols()
    }

    /// Elementwise `g_pos - g_neg`.
    pub fn signed(&self) -> Array2<f64> {
        &self.g_pos - &self.g_neg
    }

    pub fn device_count(&self) -> usize {
        self.polarity.iter().filter(|&&p| p != 0).count()
    }
}

pub fn split_signed(q: &QuantizedWeights) -> SplitConductance {
    let g_pos = Zip::from(&q.magnitudes).and(&q.signs).map_collect(|&m, &s| if s > 0 { m } else { 0.0 });
    let g_neg = Zip::from(&q.magnitudes).and(&q.signs).map_collect(|&m, &s| if s < 0 { m } else { 0.0 });
    SplitConductance { g_pos, g_neg, polarity: q.signs.clone() }
}

/// Shifts every present device by `k_sigma * sigma_unit`, clamping at zero.
pub fn apply_variation(s: &SplitConductance, cfg: &NonIdealityConfig) -> SplitConductance {
    let delta = cfg.delta();
    if delta == 0.0 {
        return s.clone();
    }
    let shift = |g: &mut f64, p: &i8, side: i8| {
        if *p == side {
            *g = (*g + delta).max(0.0);
        }
    };
    let mut out = s.clone();
    Zip::from(&mut out.g_pos).and(&s.polarity).for_each(|g, p| shift(g, p, 1));
    Zip::from(&mut out.g_neg).and(&s.polarity).for_each(|g, p| shift(g, p, -1));
    out
}
