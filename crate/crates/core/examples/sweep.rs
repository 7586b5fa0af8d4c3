//! Accuracy degradation of an ideally trained network across hardware
//! corners and crossbar sizes, with optional aware fine-tuning per cell.
//!
//! ```text
//! cargo run --release --example sweep -- [ideal.ckpt] [mnist_dir] [aware]
//! ```

use memxbar::checkpoint;
use memxbar::data::Dataset;
use memxbar::experiments::{run_sweep, summarize, SweepSpec, VariationProtocol};
use memxbar::tech::NonIdealityConfig;
use memxbar::train::{Mode, TrainConfig};

fn main() -> memxbar::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let ckpt = args.first().map_or("results/ideal.ckpt", String::as_str);
    let dir = args.get(1).map_or("data/mnist", String::as_str);
    let mut modes = vec![Mode::Ideal];
    if args.get(2).is_some_and(|a| a == "aware") {
        modes.push(Mode::Aware);
    }

    let (baseline, _) = checkpoint::load(ckpt)?;
    let (train_set, test_set) = Dataset::load_mnist_dir(dir)?;
    let spec = SweepSpec {
        rs_ratios: vec![0.00067, 0.0027],
        rneu_ratios: vec![0.0, 0.00067],
        k_sigmas: vec![-2, 0, 2],
        tile_sizes: vec![(784, 500), (112, 100)],
        repetitions: 1,
        modes,
        protocol: VariationProtocol::PerCorner,
    };
    let aware = TrainConfig::aware(NonIdealityConfig::ideal());
    let rows = run_sweep(&spec, &aware, &train_set, &test_set, |_, _| Ok(baseline.clone()), |r| {
        println!(
            "{:<5} rs {:<7} rneu {:<7} k {:>2} tile {:>3}x{:<3} accuracy {:6.2}%  degradation {:6.2}",
            r.mode, r.rs_ratio, r.rneu_ratio, r.k_sigma, r.tile_m, r.tile_n, r.accuracy, r.degradation
        );
    })?;
    let worst = summarize(&rows).into_iter().max_by(|a, b| a.mean_degradation.total_cmp(&b.mean_degradation));
    if let Some(w) = worst {
        println!(
            "worst cell: {} at rs {} rneu {} k {} tile {}x{}, degradation {:.2}",
            w.mode, w.rs_ratio, w.rneu_ratio, w.k_sigma, w.tile_m, w.tile_n, w.mean_degradation
        );
    }
    Ok(())
}
