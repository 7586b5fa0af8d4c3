//! Fine-tunes an ideally trained network with the non-ideal crossbar model
//! in the loop and compares it with the unaware network at the same corner.
//!
//! ```text
//! cargo run --release --example train_aware -- [ideal.ckpt] [mnist_dir] [k_sigma] [epochs]
//! ```

use memxbar::checkpoint;
use memxbar::data::Dataset;
use memxbar::tech::NonIdealityConfig;
use memxbar::train::{evaluate, train, Mode, TrainConfig};

fn main() -> memxbar::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let ckpt = args.first().map_or("results/ideal.ckpt", String::as_str);
    let dir = args.get(1).map_or("data/mnist", String::as_str);
    let k_sigma: i8 = args.get(2).map_or(Ok(0), |k| k.parse()).expect("k_sigma must be an integer");
    let epochs: usize = args.get(3).map_or(Ok(4), |e| e.parse()).expect("epochs must be an integer");

    let (train_set, test_set) = Dataset::load_mnist_dir(dir)?;
    let (mut net, _) = checkpoint::load(ckpt)?;
    let corner = NonIdealityConfig::new(0.0027, 0.00067, k_sigma)?;
    let cfg = TrainConfig { epochs, ..TrainConfig::aware(corner) };

    let ideal = evaluate(&net, &test_set, &cfg.with_mode(Mode::Ideal))?;
    let unaware = evaluate(&net, &test_set, &cfg)?;
    println!("ideal {ideal:.2}%  unaware on hardware {unaware:.2}%  degradation {:.2}", ideal - unaware);

    let start = std::time::Instant::now();
    let history = train(&mut net, &train_set, Some(&test_set), &cfg)?;
    for e in &history.epochs {
        println!("aware epoch {}  loss {:.4}  test {:.2}%", e.epoch, e.loss, e.test_accuracy.unwrap_or(f64::NAN));
    }
    let aware = evaluate(&net, &test_set, &cfg)?;
    println!("aware on hardware {aware:.2}%  gap to ideal {:.2}  ({:.1}s)", ideal - aware, start.elapsed().as_secs_f64());
    Ok(())
}
