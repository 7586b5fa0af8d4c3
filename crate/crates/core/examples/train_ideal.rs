//! Trains a 784-500-10 sigmoid network on MNIST with plain backpropagation
//! and saves a checkpoint.
//!
//! ```text
//! cargo run --release --example train_ideal -- [mnist_dir] [epochs] [out.ckpt]
//! ```

use memxbar::checkpoint;
use memxbar::data::Dataset;
use memxbar::train::{train, Network, TrainConfig};

fn main() -> memxbar::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let dir = args.first().map_or("data/mnist", String::as_str);
    let epochs = args.get(1).map_or(Ok(20), |e| e.parse()).expect("epochs must be an integer");
    let out = args.get(2).map_or("results/ideal.ckpt", String::as_str);

    let (train_set, test_set) = Dataset::load_mnist_dir(dir)?;
    let cfg = TrainConfig { epochs, ..TrainConfig::ideal() };
    let mut net = Network::new(&[784, 500, 10], cfg.seed)?;
    let start = std::time::Instant::now();
    let history = train(&mut net, &train_set, Some(&test_set), &cfg)?;
    for e in &history.epochs {
        println!(
            "epoch {:>2}  loss {:.4}  train {:.2}%  test {:.2}%",
            e.epoch,
            e.loss,
            e.train_accuracy,
            e.test_accuracy.unwrap_or(f64::NAN)
        );
    }
    println!("trained in {:.1}s", start.elapsed().as_secs_f64());
    if let Some(parent) = std::path::Path::new(out).parent() {
        std::fs::create_dir_all(parent)?;
    }
    checkpoint::save(out, &net, &cfg)?;
    println!("saved {out}");
    Ok(())
}
