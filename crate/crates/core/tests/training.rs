//! End-to-end training behaviour on a small synthetic digit set.

mod common;

use memxbar::checkpoint;
use memxbar::data::{Dataset, Split, CLASSES, PIXELS};
use memxbar::tech::NonIdealityConfig;
use memxbar::train::{evaluate, evaluate_against, predict, train, Mode, Network, TrainConfig};
use memxbar::Error;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Each class lights a different band of rows, plus noise.
fn synthetic(count: usize, seed: u64, split: Split) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<u8> = (0..count).map(|_| rng.gen_range(0..CLASSES as u8)).collect();
    let mut images = Array2::zeros((count, PIXELS));
    for (mut row, &l) in images.outer_iter_mut().zip(&labels) {
        for (p, v) in row.iter_mut().enumerate() {
            let band = (p / 28) * CLASSES / 28;
            let base = if band == l as usize { 0.9 } else { 0.05 };
            *v = (base + rng.gen_range(-0.05..0.05f64)).clamp(0.0, 1.0);
        }
    }
    Dataset::new(images, labels, split).unwrap()
}

fn small_ideal() -> TrainConfig {
    TrainConfig { epochs: 3, batch_size: 10, learning_rate: 1.0, ..TrainConfig::ideal() }
}

fn hardware() -> NonIdealityConfig {
    NonIdealityConfig::new(0.0027, 0.00067, 0).unwrap()
}

#[test]
fn ideal_training_learns_the_synthetic_task() {
    let (tr, te) = (synthetic(300, 1, Split::Train), synthetic(100, 2, Split::Test));
    let mut net = Network::new(&[PIXELS, 16, CLASSES], 3).unwrap();
    let history = train(&mut net, &tr, Some(&te), &small_ideal()).unwrap();
    assert_eq!(history.epochs.len(), 3);
    assert!(history.epochs.iter().all(|e| e.loss >= 0.0));
    assert!(history.last().unwrap().test_accuracy.unwrap() > 90.0);
}

#[test]
fn training_is_deterministic() {
    let tr = synthetic(120, 4, Split::Train);
    let run = |mode: Mode| {
        let mut net = Network::new(&[PIXELS, 8, CLASSES], 5).unwrap();
        let cfg = TrainConfig { mode, epochs: 2, ..TrainConfig::aware(hardware()) };
        let h = train(&mut net, &tr, None, &cfg).unwrap();
        (net.weights().to_vec(), h.epochs.iter().map(|e| e.loss).collect::<Vec<_>>())
    };
    for mode in [Mode::Ideal, Mode::Aware] {
        assert_eq!(run(mode), run(mode));
    }
}

#[test]
fn aware_training_recovers_hardware_accuracy() {
    let (tr, te) = (synthetic(300, 6, Split::Train), synthetic(100, 7, Split::Test));
    let mut net = Network::new(&[PIXELS, 16, CLASSES], 8).unwrap();
    train(&mut net, &tr, None, &small_ideal()).unwrap();
    // A heavy corner so the unaware network visibly suffers.
    let heavy = NonIdealityConfig::new(0.05, 0.02, 0).unwrap();
    let aware = TrainConfig { epochs: 3, ..TrainConfig::aware(heavy) };
    let ideal_acc = evaluate(&net, &te, &small_ideal()).unwrap();
    let unaware = evaluate_against(&net, &te, &aware, ideal_acc).unwrap();
    let mut tuned = net.clone();
    train(&mut tuned, &tr, None, &aware).unwrap();
    let recovered = evaluate_against(&tuned, &te, &aware, ideal_acc).unwrap();
    assert!(recovered.accuracy >= unaware.accuracy, "{} < {}", recovered.accuracy, unaware.accuracy);
}

#[test]
fn checkpoint_round_trip_reproduces_evaluation() {
    let (tr, te) = (synthetic(100, 9, Split::Train), synthetic(50, 10, Split::Test));
    let mut net = Network::new(&[PIXELS, 8, CLASSES], 11).unwrap();
    let cfg = TrainConfig { epochs: 1, ..TrainConfig::aware(hardware()) };
    train(&mut net, &tr, None, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.ckpt");
    checkpoint::save(&path, &net, &cfg).unwrap();
    let (restored, header) = checkpoint::load(&path).unwrap();
    assert_eq!(header.config, cfg);
    assert_eq!(restored.weights(), net.weights());
    assert_eq!(predict(&restored, te.images.view(), &cfg).unwrap(), predict(&net, te.images.view(), &cfg).unwrap());
}

#[test]
fn evaluation_leaves_the_network_untouched() {
    let te = synthetic(40, 12, Split::Test);
    let net = Network::new(&[PIXELS, 8, CLASSES], 13).unwrap();
    let before = net.weights().to_vec();
    let cfg = TrainConfig::aware(NonIdealityConfig::new(0.0027, 0.00067, -2).unwrap());
    let a = evaluate(&net, &te, &cfg).unwrap();
    let b = evaluate(&net, &te, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(net.weights(), &before[..]);
    assert!(matches!(net.shadow(&cfg), Err(Error::StaleShadow(_))));
}

#[test]
fn all_zero_weights_are_rejected_in_aware_mode() {
    let te = synthetic(10, 14, Split::Test);
    let net = Network::from_weights(vec![Array2::zeros((PIXELS, 4)), Array2::zeros((4, CLASSES))]).unwrap();
    let err = evaluate(&net, &te, &TrainConfig::aware(hardware())).unwrap_err();
    assert!(matches!(err, Error::ZeroMatrix));
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn aware_reduces_to_ideal_without_non_idealities() {
    assert!(common::reduction_gap(100, 21) <= 1e-10);
}
