//! Compares the analytical crossbar model with a full nodal solution of
//! the first layer of a trained network over a grid of source and neuron
//! resistances.
//!
//! ```text
//! cargo run --release --example oracle_validation -- [ideal.ckpt] [mnist_dir] [images]
//! ```

use memxbar::checkpoint;
use memxbar::data::Dataset;
use memxbar::experiments::{layer_inputs, nrmsd_grid};
use memxbar::tech::NonIdealityConfig;
use memxbar::train::TrainConfig;

fn main() -> memxbar::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let ckpt = args.first().map_or("results/ideal.ckpt", String::as_str);
    let dir = args.get(1).map_or("data/mnist", String::as_str);
    let images: usize = args.get(2).map_or(Ok(100), |n| n.parse()).expect("images must be an integer");

    let (net, _) = checkpoint::load(ckpt)?;
    let (_, test_set) = Dataset::load_mnist_dir(dir)?;
    let inputs = layer_inputs(&net, test_set.head(images).images.view(), 0)?;
    let base = TrainConfig::aware(NonIdealityConfig::ideal());
    let rs = [0.00067, 0.0013, 0.0027];
    let rneu = [0.0, 0.00033, 0.00067];
    println!("{:>9} {:>10} {:>10} {:>10} {:>10}", "rs_ratio", "rneu_ratio", "nrmsd", "residual", "nodes");
    for p in nrmsd_grid(&net, inputs.view(), 0, &base, &rs, &rneu)? {
        println!(
            "{:>9} {:>10} {:>10.5} {:>10.1e} {:>10}",
            p.rs_ratio, p.rneu_ratio, p.nrmsd, p.max_residual, p.node_count
        );
    }
    Ok(())
}
