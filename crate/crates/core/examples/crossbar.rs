//! The analytical non-ideal crossbar model on a random layer: degradation
//! factors, output error against the ideal dot product, and how tiling
//! onto smaller crossbars reduces it.
//!
//! ```text
//! cargo run --release --example crossbar
//! ```

use memxbar::tech::{quantize, split_signed, NonIdealityConfig};
use memxbar::xbar::{degradation_factors, forward, partition, tiled_forward};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> memxbar::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (rows, cols) = (784, 500);
    let w = Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-0.1..0.1));
    let split = split_signed(&quantize(w.view(), 99.99)?);
    let a = ndarray::Array1::from_shape_fn(rows, |_| rng.gen_range(0.0..1.0));
    let ideal = a.dot(&split.signed());

    let cfg = NonIdealityConfig::new(0.0027, 0.00067, 0)?;
    let f = degradation_factors(&split, &cfg);
    let mean = |v: &ndarray::Array1<f64>| v.sum() / v.len() as f64;
    println!(
        "784x500 at rs_ratio 0.0027, rneu_ratio 0.00067: mean beta+ {:.3}, mean beta- {:.3}, mean gamma {:.3}",
        mean(&f.source_mult_pos),
        mean(&f.source_mult_neg),
        mean(&f.gamma)
    );

    let rms = |z: &ndarray::Array1<f64>| ((z - &ideal).mapv(|e| e * e).sum() / cols as f64).sqrt();
    println!("{:>10} {:>8} {:>14}", "tile", "tiles", "rms error");
    println!("{:>10} {:>8} {:>14.5}", "784x500", 1, rms(&forward(&split, &cfg, a.view())?));
    for (m, n) in [(392, 250), (196, 100), (112, 100), (56, 50)] {
        let grid = partition(&split, m, n)?;
        let z = tiled_forward(&grid, &cfg, a.view())?;
        println!("{:>10} {:>8} {:>14.5}", format!("{m}x{n}"), grid.tiles.len(), rms(&z));
    }
    Ok(())
}
