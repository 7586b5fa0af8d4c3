//! Test oracles shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

use memxbar::tech::{NonIdealityConfig, SplitConductance};
use memxbar::train::{conductance_gradients, forward_batch, sigmoid, Network, TrainConfig};
use memxbar::xbar::{partition, tiled_forward};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Gradients smaller than this are compared in absolute terms.
pub const GRAD_FLOOR: f64 = 1e-4;
pub const FD_STEP: f64 = 1e-6;

/// Summed loss of the aware forward model evaluated through `partition`
/// and `tiled_forward`, independently of the training code path.
pub fn aware_loss(
    splits: &[SplitConductance],
    scales: &[f64],
    tiles: &[(usize, usize)],
    nonideal: &NonIdealityConfig,
    x: &Array2<f64>,
    y: &Array2<f64>,
) -> f64 {
    let grids: Vec<_> = splits.iter().zip(tiles).map(|(s, &(m, n))| partition(s, m, n).unwrap()).collect();
    let mut total = 0.0;
    for (xs, ys) in x.outer_iter().zip(y.outer_iter()) {
        let mut a: Array1<f64> = xs.to_owned();
        for (grid, &scale) in grids.iter().zip(scales) {
            a = tiled_forward(grid, nonideal, a.view()).unwrap().mapv(|z| sigmoid(scale * z));
        }
        total += 0.5 * a.iter().zip(ys).map(|(p, t)| (t - p).powi(2)).sum::<f64>();
    }
    total
}

pub struct GradCase {
    pub net: Network,
    pub cfg: TrainConfig,
    pub x: Array2<f64>,
    pub y: Array2<f64>,
}

/// Random network (every size in `1..=max_dim`), inputs, one-hot targets
/// and hardware corner inside `[0, rs_max] x [0, rneu_max]`, with random
/// tiling on half of the cases.
pub fn random_case(seed: u64, max_dim: usize, rs_max: f64, rneu_max: f64) -> GradCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = rng.gen_range(1..=3);
    let dims: Vec<usize> = (0..=layers).map(|_| rng.gen_range(1..=max_dim)).collect();
    let mut net = Network::new(&dims, seed).unwrap();
    let boost: f64 = rng.gen_range(1.0..4.0);
    net.update_weights(|ws| ws.iter_mut().for_each(|w| w.mapv_inplace(|v| v * boost)));
    let nonideal = NonIdealityConfig::new(rng.gen_range(0.0..=rs_max), rng.gen_range(0.0..=rneu_max), rng.gen_range(-2..=2)).unwrap();
    let tiling = rng
        .gen_bool(0.5)
        .then(|| dims.windows(2).map(|d| (rng.gen_range(1..=d[0]), rng.gen_range(1..=d[1]))).collect());
    let cfg = TrainConfig { tiling, clip_percentile: rng.gen_range(90.0..=100.0), ..TrainConfig::aware(nonideal) };
    let batch = rng.gen_range(1..=3);
    let x = Array2::from_shape_fn((batch, dims[0]), |_| rng.gen_range(0.0..1.0));
    let out = *dims.last().unwrap();
    let y = Array2::from_shape_fn((batch, out), |(r, c)| if c == (r * 7 + seed as usize) % out { 1.0 } else { 0.0 });
    net.sync_shadow(&cfg).unwrap();
    GradCase { net, cfg, x, y }
}

pub struct GradReport {
    pub max_rel_error: f64,
    pub checked: usize,
}

/// Analytic conductance gradients versus central differences of
/// [`aware_loss`], perturbing every present device.
pub fn check_gradients(case: &GradCase) -> GradReport {
    let GradCase { net, cfg, x, y } = case;
    let rec = forward_batch(net, x.view(), cfg).unwrap();
    let analytic = conductance_gradients(net, &rec, y.view(), cfg).unwrap();
    let shadow = net.shadow(cfg).unwrap();
    let splits: Vec<SplitConductance> = shadow.iter().map(|s| s.split().clone()).collect();
    let scales: Vec<f64> = shadow.iter().map(|s| s.quantized.scale).collect();
    let tiles: Vec<(usize, usize)> = match &cfg.tiling {
        Some(t) => t.clone(),
        None => splits.iter().map(|s| (s.rows(), s.cols())).collect(),
    };
    let base = aware_loss(&splits, &scales, &tiles, &cfg.nonideal, x, y);
    let model_loss = 0.5 * (rec.output() - y).mapv(|e| e * e).sum();
    assert!((base - model_loss).abs() <= 1e-12 * (1.0 + base.abs()), "forward paths disagree: {base} vs {model_loss}");

    let mut worst = 0f64;
    let mut checked = 0;
    for l in 0..splits.len() {
        for side in 0..2 {
            let g = if side == 0 { &splits[l].g_pos } else { &splits[l].g_neg };
            for ((i, j), &v) in g.indexed_iter() {
                if v <= 0.0 {
                    continue;
                }
                let eval = |delta: f64| {
                    let mut s = splits.clone();
                    let arr = if side == 0 { &mut s[l].g_pos } else { &mut s[l].g_neg };
                    arr[[i, j]] += delta;
                    aware_loss(&s, &scales, &tiles, &cfg.nonideal, x, y)
                };
                let fd = (eval(FD_STEP) - eval(-FD_STEP)) / (2.0 * FD_STEP);
                let an = if side == 0 { analytic[l].0[[i, j]] } else { analytic[l].1[[i, j]] };
                let err = (an - fd).abs() / an.abs().max(fd.abs()).max(GRAD_FLOOR);
                worst = worst.max(err);
                checked += 1;
            }
        }
    }
    GradReport { max_rel_error: worst, checked }
}

/// Runs `iterations` training steps in ideal mode and in aware mode with
/// zero non-idealities and no discretization from the same start, and
/// returns the largest weight difference seen along the way.
pub fn reduction_gap(iterations: usize, seed: u64) -> f64 {
    use memxbar::tech::Discretization;
    use memxbar::train::{train_step, Mode};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = [12, 7, 10];
    let ideal_cfg = TrainConfig { batch_size: 5, learning_rate: 0.5, seed, ..TrainConfig::ideal() };
    let aware_cfg = TrainConfig {
        mode: Mode::Aware,
        clip_percentile: 100.0,
        discretization: Discretization::Off,
        nonideal: NonIdealityConfig::ideal(),
        ..ideal_cfg.clone()
    };
    let mut ideal = Network::new(&dims, seed).unwrap();
    let mut aware = ideal.clone();
    let mut gap = 0f64;
    for _ in 0..iterations {
        let x = Array2::from_shape_fn((5, dims[0]), |_| rng.gen_range(0.0..1.0));
        let labels: Vec<u8> = (0..5).map(|_| rng.gen_range(0..10)).collect();
        train_step(&mut ideal, x.view(), &labels, &ideal_cfg).unwrap();
        train_step(&mut aware, x.view(), &labels, &aware_cfg).unwrap();
        for (a, b) in ideal.weights().iter().zip(aware.weights()) {
            gap = gap.max((a - b).iter().fold(0.0, |m, d| m.max(d.abs())));
        }
    }
    gap
}

/// Largest relative disagreement between the model, the oracle and the
/// closed-form series current over `count` random single-cell circuits.
pub fn single_cell_gap(count: usize, seed: u64) -> f64 {
    use memxbar::oracle::CircuitOracle;
    use memxbar::xbar::forward;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0f64;
    for _ in 0..count {
        let g: f64 = rng.gen_range(1e-3..=1.0);
        let r_s: f64 = rng.gen_range(0.0..1.0);
        let r_neu: f64 = rng.gen_range(0.0..1.0);
        let a: f64 = rng.gen_range(0.0..=1.0);
        let negative = rng.gen_bool(0.5);
        let (gp, gn) = if negative { (0.0, g) } else { (g, 0.0) };
        let s = SplitConductance::from_arrays(Array2::from_elem((1, 1), gp), Array2::from_elem((1, 1), gn)).unwrap();
        let cfg = NonIdealityConfig { rs_ratio: r_s / 15.0, rneu_ratio: r_neu / 15.0, ..NonIdealityConfig::ideal() };
        let sign = if negative { -1.0 } else { 1.0 };
        let exact = sign * a / (cfg.r_s() + 1.0 / g + cfg.r_neu());
        let input = Array1::from_elem(1, a);
        let model = forward(&s, &cfg, input.view()).unwrap()[0];
        let oracle = CircuitOracle::new(&s, &cfg).unwrap().solve(input.view()).unwrap().currents[0];
        let scale = exact.abs().max(1e-300);
        worst = worst.max((model - exact).abs() / scale).max((oracle - exact).abs() / scale).max((model - oracle).abs() / scale);
    }
    worst
}
