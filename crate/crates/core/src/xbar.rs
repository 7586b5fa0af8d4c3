//! Analytical model of a non-ideal crossbar pair.
//!
//! Each row `i` drives the positive array with `+a[i]` and the negative
//! array with `-a[i]` through the source resistance `R_s`. Every column
//! collects the current of both arrays into one neuron of resistance
//! `R_neu`. The row voltages are degraded by the multiplier
//!
//! ```text
//! beta[i] = 1 / (1 + R_s * sum_j g[i,j] / (1 + R_neu * g[i,j]))
//! ```
//!
//! (the conductance of a device in series with the neuron is
//! `1 / (1/g + R_neu)`) and the column current is divided by the loading
//! factor `gamma[j] = 1 + R_neu * sum_i (g_pos[i,j] + g_neg[i,j])`.
//! Sneak paths are not modeled; [`crate::oracle`] solves the full circuit.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::tech::{NonIdealityConfig, SplitConductance};

#[derive(Debug, Clone, PartialEq)]
pub struct DegradationFactors {
    pub source_mult_pos: Array1<f64>,
    pub source_mult_neg: Array1<f64>,
    pub gamma: Array1<f64>,
}

/// Conductance of a device in series with the neuron resistance.
#[inline]
fn series(g: f64, r_neu: f64) -> f64 {
    g / (1.0 + r_neu * g)
}

#[inline]
fn source_mult(row: ArrayView1<f64>, r_s: f64, r_neu: f64) -> f64 {
    if r_s == 0.0 {
        return 1.0;
    }
    let load: f64 = row.iter().map(|&g| series(g, r_neu)).sum();
    1.0 / (1.0 + r_s * load)
}

fn factors_of(g_pos: ArrayView2<f64>, g_neg: ArrayView2<f64>, r_s: f64, r_neu: f64) -> DegradationFactors {
    let source_mult_pos = g_pos.outer_iter().map(|row| source_mult(row, r_s, r_neu)).collect();
    let source_mult_neg = g_neg.outer_iter().map(|row| source_mult(row, r_s, r_neu)).collect();
    let gamma = if r_neu == 0.0 {
        Array1::ones(g_pos.ncols())
    } else {
        (&g_pos.sum_axis(Axis(0)) + &g_neg.sum_axis(Axis(0))).mapv(|col| 1.0 + r_neu * col)
    };
    DegradationFactors { source_mult_pos, source_mult_neg, gamma }
}

/// Input-independent degradation factors of one crossbar pair.
pub fn degradation_factors(s: &SplitConductance, cfg: &NonIdealityConfig) -> DegradationFactors {
    factors_of(s.g_pos.view(), s.g_neg.view(), cfg.r_s(), cfg.r_neu())
}

fn forward_with(s_pos: ArrayView2<f64>, s_neg: ArrayView2<f64>, f: &DegradationFactors, a: ArrayView1<f64>) -> Array1<f64> {
    let (rows, cols) = s_pos.dim();
    let mut z = Array1::zeros(cols);
    for i in 0..rows {
        let ai = a[i];
        let (bp, bn) = (f.source_mult_pos[i], f.source_mult_neg[i]);
        for ((zj, &gp), &gn) in z.iter_mut().zip(s_pos.row(i)).zip(s_neg.row(i)) {
            *zj += ai * (bp * gp - bn * gn);
        }
    }
    z /= &f.gamma;
    z
}

/// Output currents of one crossbar pair for the input vector `a`.
pub fn forward(s: &SplitConductance, cfg: &NonIdealityConfig, a: ArrayView1<f64>) -> Result<Array1<f64>> {
    check_input(s.rows(), a)?;
    let f = degradation_factors(s, cfg);
    Ok(forward_with(s.g_pos.view(), s.g_neg.view(), &f, a))
}

fn check_input(rows: usize, a: ArrayView1<f64>) -> Result<()> {
    if a.len() != rows {
        return Err(Error::Dimension(format!("input has {} entries, crossbar has {rows} rows", a.len())));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("crossbar input"));
    }
    Ok(())
}

/// One physical sub-crossbar and its position in the logical array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tile {
    pub row0: usize,
    pub col0: usize,
    pub split: SplitConductance,
}

/// Row-major partition of a logical `M x N` crossbar into `m x n` tiles.
#[derive(Debug, Clone, PartialEq)]
pub struct TileGrid {
    pub logical_rows: usize,
    pub logical_cols: usize,
    pub tile_rows: usize,
    pub tile_cols: usize,
    pub tiles: Vec<Tile>,
}

impl TileGrid {
    pub fn row_blocks(&self) -> usize {
        self.logical_rows.div_ceil(self.tile_rows)
    }

    pub fn col_blocks(&self) -> usize {
        self.logical_cols.div_ceil(self.tile_cols)
    }

    pub fn tile(&self, r: usize, c: usize) -> &Tile {
        &self.tiles[r * self.col_blocks() + c]
    }
}

fn check_tile_dims(rows: usize, cols: usize, m: usize, n: usize) -> Result<()> {
    if m == 0 || n == 0 {
        return Err(Error::Config(format!("tile dimensions must be positive, got {m}x{n}")));
    }
    if m > rows || n > cols {
        return Err(Error::Config(format!("tile {m}x{n} exceeds crossbar {rows}x{cols}")));
    }
    Ok(())
}

pub fn partition(s: &SplitConductance, m: usize, n: usize) -> Result<TileGrid> {
    let (rows, cols) = (s.rows(), s.cols());
    check_tile_dims(rows, cols, m, n)?;
    let mut tiles = Vec::with_capacity(rows.div_ceil(m) * cols.div_ceil(n));
    for row0 in (0..rows).step_by(m) {
        for col0 in (0..cols).step_by(n) {
            let r = row0..(row0 + m).min(rows);
            let c = col0..(col0 + n).min(cols);
            let split = SplitConductance {
                g_pos: s.g_pos.slice(s![r.clone(), c.clone()]).to_owned(),
                g_neg: s.g_neg.slice(s![r.clone(), c.clone()]).to_owned(),
                polarity: s.polarity.slice(s![r, c]).to_owned(),
            };
            tiles.push(Tile { row0, col0, split });
        }
    }
    Ok(TileGrid { logical_rows: rows, logical_cols: cols, tile_rows: m, tile_cols: n, tiles })
}

pub(crate) fn pairwise_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        n => pairwise_sum(&v[..n / 2]) + pairwise_sum(&v[n / 2..]),
    }
}

/// Evaluates every tile with its own degradation factors and sums the
/// partial column outputs across row blocks.
pub fn tiled_forward(grid: &TileGrid, cfg: &NonIdealityConfig, a: ArrayView1<f64>) -> Result<Array1<f64>> {
    check_input(grid.logical_rows, a)?;
    let (rb, cb) = (grid.row_blocks(), grid.col_blocks());
    // partial[c][j_local][r]
    let mut partial: Vec<Vec<Vec<f64>>> = (0..cb)
        .map(|c| {
            let width = grid.tile(0, c).split.cols();
            vec![Vec::with_capacity(rb); width]
        })
        .collect();
    for tile in &grid.tiles {
        let input = a.slice(s![tile.row0..tile.row0 + tile.split.rows()]);
        let out = forward(&tile.split, cfg, input)?;
        let c = tile.col0 / grid.tile_cols;
        for (j, v) in out.iter().enumerate() {
            partial[c][j].push(*v);
        }
    }
    let mut z = Array1::zeros(grid.logical_cols);
    for (c, block) in partial.iter().enumerate() {
        for (j, parts) in block.iter().enumerate() {
            z[c * grid.tile_cols + j] = pairwise_sum(parts);
        }
    }
    Ok(z)
}

/// A crossbar pair (optionally tiled) folded into one effective weight
/// matrix, together with what is needed to differentiate it.
///
/// `effective[i,j] = (beta_pos[i] g_pos[i,j] - beta_neg[i] g_neg[i,j]) / gamma[j]`
/// where `beta` is computed over the columns of the tile holding `(i,j)`
/// and `gamma` over its rows, so `a . effective` equals [`tiled_forward`].
#[derive(Debug, Clone)]
pub struct EffectiveCrossbar {
    pub split: SplitConductance,
    r_s: f64,
    r_neu: f64,
    tile_rows: usize,
    tile_cols: usize,
    /// `rows x col_blocks`
    beta_pos: Array2<f64>,
    beta_neg: Array2<f64>,
    /// `row_blocks x cols`
    gamma: Array2<f64>,
    effective: Array2<f64>,
}

impl EffectiveCrossbar {
    /// `tile` of `None` evaluates the whole array as one crossbar.
    pub fn new(split: SplitConductance, cfg: &NonIdealityConfig, tile: Option<(usize, usize)>) -> Result<Self> {
        let (rows, cols) = (split.rows(), split.cols());
        let (m, n) = tile.unwrap_or((rows, cols));
        check_tile_dims(rows, cols, m, n)?;
        let (r_s, r_neu) = (cfg.r_s(), cfg.r_neu());
        let (rb, cb) = (rows.div_ceil(m), cols.div_ceil(n));
        let mut beta_pos = Array2::zeros((rows, cb));
        let mut beta_neg = Array2::zeros((rows, cb));
        let mut gamma = Array2::zeros((rb, cols));
        for r in 0..rb {
            for c in 0..cb {
                let rr = r * m..((r + 1) * m).min(rows);
                let cc = c * n..((c + 1) * n).min(cols);
                let f = factors_of(
                    split.g_pos.slice(s![rr.clone(), cc.clone()]),
                    split.g_neg.slice(s![rr.clone(), cc.clone()]),
                    r_s,
                    r_neu,
                );
                beta_pos.slice_mut(s![rr.clone(), c]).assign(&f.source_mult_pos);
                beta_neg.slice_mut(s![rr, c]).assign(&f.source_mult_neg);
                gamma.slice_mut(s![r, cc]).assign(&f.gamma);
            }
        }
        let mut effective = Array2::zeros((rows, cols));
        for ((i, j), e) in effective.indexed_iter_mut() {
            let (c, r) = (j / n, i / m);
            *e = (beta_pos[[i, c]] * split.g_pos[[i, j]] - beta_neg[[i, c]] * split.g_neg[[i, j]]) / gamma[[r, j]];
        }
        Ok(EffectiveCrossbar { split, r_s, r_neu, tile_rows: m, tile_cols: n, beta_pos, beta_neg, gamma, effective })
    }

    pub fn effective(&self) -> &Array2<f64> {
        &self.effective
    }

    pub fn tile_dims(&self) -> (usize, usize) {
        (self.tile_rows, self.tile_cols)
    }

    /// Chain rule from `dL/d effective` to `(dL/d g_pos, dL/d g_neg)`,
    /// including the dependence of `beta` and `gamma` on every conductance
    /// of their tile. Entries without a device are differentiated as if a
    /// device of conductance 0 were present.
    pub fn conductance_gradients(&self, grad_eff: ArrayView2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
        let (rows, cols) = self.effective.dim();
        if grad_eff.dim() != (rows, cols) {
            return Err(Error::Dimension(format!(
                "gradient {:?} vs crossbar {:?}",
                grad_eff.dim(),
                (rows, cols)
            )));
        }
        let (m, n) = (self.tile_rows, self.tile_cols);
        let (gp, gn) = (&self.split.g_pos, &self.split.g_neg);
        let mut grad_gamma: Array2<f64> = Array2::zeros(self.gamma.dim());
        let mut grad_bp: Array2<f64> = Array2::zeros(self.beta_pos.dim());
        let mut grad_bn: Array2<f64> = Array2::zeros(self.beta_neg.dim());
        for i in 0..rows {
            let r = i / m;
            for j in 0..cols {
                let (c, ge) = (j / n, grad_eff[[i, j]]);
                let inv_gamma = 1.0 / self.gamma[[r, j]];
                grad_gamma[[r, j]] -= ge * self.effective[[i, j]] * inv_gamma;
                grad_bp[[i, c]] += ge * gp[[i, j]] * inv_gamma;
                grad_bn[[i, c]] -= ge * gn[[i, j]] * inv_gamma;
            }
        }
        let (r_s, r_neu) = (self.r_s, self.r_neu);
        let mut d_pos = Array2::zeros((rows, cols));
        let mut d_neg = Array2::zeros((rows, cols));
        for i in 0..rows {
            let r = i / m;
            for j in 0..cols {
                let c = j / n;
                let (bp, bn) = (self.beta_pos[[i, c]], self.beta_neg[[i, c]]);
                let inv_gamma = 1.0 / self.gamma[[r, j]];
                let ge = grad_eff[[i, j]];
                let via_gamma = r_neu * grad_gamma[[r, j]];
                // d beta / d g = -R_s beta^2 / (1 + R_neu g)^2
                let sp = 1.0 + r_neu * gp[[i, j]];
                let sn = 1.0 + r_neu * gn[[i, j]];
                d_pos[[i, j]] = ge * bp * inv_gamma + via_gamma - r_s * bp * bp / (sp * sp) * grad_bp[[i, c]];
                d_neg[[i, j]] = -ge * bn * inv_gamma + via_gamma - r_s * bn * bn / (sn * sn) * grad_bn[[i, c]];
            }
        }
        Ok((d_pos, d_neg))
    }
}
