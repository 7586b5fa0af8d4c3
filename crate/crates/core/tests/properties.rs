//! Property tests for the conductance mapping, the analytical crossbar
//! model, tiling and batching.

use memxbar::data::batches;
use memxbar::tech::{apply_variation, map_weights, quantize, split_signed, Discretization, NonIdealityConfig, SplitConductance};
use memxbar::xbar::{degradation_factors, forward, partition, tiled_forward};
use ndarray::{Array1, Array2};
use proptest::prelude::*;

fn matrix(max: usize, lo: f64, hi: f64) -> impl Strategy<Value = Array2<f64>> {
    (1..=max, 1..=max).prop_flat_map(move |(m, n)| {
        proptest::collection::vec(lo..hi, m * n).prop_map(move |v| Array2::from_shape_vec((m, n), v).unwrap())
    })
}

fn nonzero(w: &Array2<f64>) -> bool {
    w.iter().any(|&v| v != 0.0)
}

fn split(max: usize) -> impl Strategy<Value = SplitConductance> {
    matrix(max, -1.0, 1.0).prop_filter("needs a device", nonzero).prop_map(|w| split_signed(&quantize(w.view(), 100.0).unwrap()))
}

fn input(len: usize) -> impl Strategy<Value = Array1<f64>> {
    proptest::collection::vec(0.0f64..1.0, len).prop_map(Array1::from)
}

fn split_and_input(max: usize) -> impl Strategy<Value = (SplitConductance, Array1<f64>)> {
    split(max).prop_flat_map(|s| {
        let m = s.rows();
        (Just(s), input(m))
    })
}

fn corner() -> impl Strategy<Value = NonIdealityConfig> {
    (0.0f64..0.05, 0.0f64..0.05, -2i8..=2).prop_map(|(rs, rn, k)| NonIdealityConfig::new(rs, rn, k).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn magnitudes_lie_on_the_grid(w in matrix(12, -3.0, 3.0).prop_filter("nonzero", nonzero), clip in 50.0f64..=100.0) {
        let q = quantize(w.view(), clip).unwrap();
        let mut smallest = f64::INFINITY;
        let mut largest = 0f64;
        for (&m, &s) in q.magnitudes.iter().zip(&q.signs) {
            let k = m * 15.0;
            prop_assert_eq!(k, k.round());
            prop_assert!((0.0..=15.0).contains(&k));
            prop_assert_eq!(s == 0, m == 0.0);
            if m > 0.0 {
                smallest = smallest.min(m);
                largest = largest.max(m);
            }
        }
        if largest > 0.0 {
            prop_assert!(largest / smallest <= 15.0 + 1e-12);
        }
    }

    #[test]
    fn quantize_is_idempotent(w in matrix(12, -3.0, 3.0).prop_filter("nonzero", nonzero), clip in 50.0f64..=100.0) {
        let q = quantize(w.view(), clip).unwrap();
        prop_assume!(q.signs.iter().any(|&s| s != 0));
        let again = quantize(q.dequantize().view(), 100.0).unwrap();
        prop_assert_eq!(&again.magnitudes, &q.magnitudes);
        prop_assert_eq!(&again.signs, &q.signs);
    }

    #[test]
    fn unrounded_mapping_is_clipped_magnitude(w in matrix(8, -3.0, 3.0).prop_filter("nonzero", nonzero), clip in 50.0f64..=100.0) {
        let q = map_weights(w.view(), clip, Discretization::Off).unwrap();
        for (&m, &v) in q.magnitudes.iter().zip(&w) {
            prop_assert_eq!(m, (v.abs() / q.scale).min(1.0));
        }
    }

    #[test]
    fn split_reconstructs_signed_magnitudes(w in matrix(12, -3.0, 3.0).prop_filter("nonzero", nonzero)) {
        let q = quantize(w.view(), 100.0).unwrap();
        let s = split_signed(&q);
        let signed = q.magnitudes.clone() * q.signs.mapv(f64::from);
        prop_assert_eq!(s.signed(), signed);
        for (&p, &n) in s.g_pos.iter().zip(&s.g_neg) {
            prop_assert_eq!(p * n, 0.0);
            prop_assert!((0.0..=1.0).contains(&p) && (0.0..=1.0).contains(&n));
        }
    }

    #[test]
    fn variation_shifts_present_devices_only(s in split(10), k in -2i8..=2, unit in 0.0f64..0.2) {
        let cfg = NonIdealityConfig::new(0.0, 0.0, k).unwrap().with_sigma_unit(unit);
        let v = apply_variation(&s, &cfg);
        prop_assert_eq!(&v.polarity, &s.polarity);
        let delta = f64::from(k) * unit;
        for ((&p, &before), &after) in s.polarity.iter().zip(&s.g_pos).zip(&v.g_pos) {
            prop_assert_eq!(after, if p == 1 { (before + delta).max(0.0) } else { 0.0 });
        }
        for ((&p, &before), &after) in s.polarity.iter().zip(&s.g_neg).zip(&v.g_neg) {
            prop_assert_eq!(after, if p == -1 { (before + delta).max(0.0) } else { 0.0 });
        }
        if k == 0 {
            prop_assert_eq!(&v, &s);
        }
        if k == 2 && unit > 0.0 {
            for (&before, &after) in s.signed().iter().zip(v.signed().iter()) {
                if before != 0.0 {
                    prop_assert!(after.abs() > before.abs());
                    prop_assert_eq!(after.abs(), before.abs() + 2.0 * unit);
                }
            }
        }
    }

    #[test]
    fn ideal_forward_is_the_dot_product((s, a) in split_and_input(10)) {
        let z = forward(&s, &NonIdealityConfig::ideal(), a.view()).unwrap();
        let dot = a.dot(&s.signed());
        for (x, y) in z.iter().zip(&dot) {
            prop_assert!((x - y).abs() <= 1e-14 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn forward_is_homogeneous_in_the_input((s, a) in split_and_input(10), cfg in corner(), c in -4.0f64..4.0) {
        let z = forward(&s, &cfg, a.view()).unwrap();
        let zc = forward(&s, &cfg, (a.clone() * c).view()).unwrap();
        for (x, y) in zc.iter().zip(&z) {
            prop_assert!((x - c * y).abs() <= 1e-12 * (1.0 + (c * y).abs()));
        }
    }

    #[test]
    fn factors_stay_in_range(s in split(10), cfg in corner()) {
        let f = degradation_factors(&s, &cfg);
        for &b in f.source_mult_pos.iter().chain(&f.source_mult_neg) {
            prop_assert!(b > 0.0 && b <= 1.0);
        }
        for &g in &f.gamma {
            prop_assert!(g >= 1.0);
        }
        let f0 = degradation_factors(&s, &NonIdealityConfig::ideal());
        prop_assert!(f0.source_mult_pos.iter().chain(&f0.source_mult_neg).all(|&b| b == 1.0));
        prop_assert!(f0.gamma.iter().all(|&g| g == 1.0));
    }

    #[test]
    fn loading_is_monotone(s in split(8), cfg in corner(), extra in 0.0f64..0.05, bump in 0.0f64..1.0, cell in any::<prop::sample::Index>()) {
        let f = degradation_factors(&s, &cfg);
        let more_rs = NonIdealityConfig { rs_ratio: cfg.rs_ratio + extra, ..cfg };
        let more_rneu = NonIdealityConfig { rneu_ratio: cfg.rneu_ratio + extra, ..cfg };
        let frs = degradation_factors(&s, &more_rs);
        let frn = degradation_factors(&s, &more_rneu);
        for (a, b) in frs.source_mult_pos.iter().zip(&f.source_mult_pos) {
            prop_assert!(a <= b);
        }
        for (a, b) in frn.gamma.iter().zip(&f.gamma) {
            prop_assert!(a >= b);
        }
        // Raising one positive-array conductance loads its row and column.
        let k = cell.index(s.rows() * s.cols());
        let (i, j) = (k / s.cols(), k % s.cols());
        prop_assume!(s.g_neg[[i, j]] == 0.0);
        let mut gp = s.g_pos.clone();
        gp[[i, j]] += bump;
        let heavier = SplitConductance::from_arrays(gp, s.g_neg.clone()).unwrap();
        let fh = degradation_factors(&heavier, &cfg);
        prop_assert!(fh.source_mult_pos[i] <= f.source_mult_pos[i]);
        prop_assert!(fh.gamma[j] >= f.gamma[j]);
    }

    #[test]
    fn appending_a_column_lowers_every_multiplier(s in split(8), rs in 0.0001f64..0.05, rneu in 0.0f64..0.05, g in 0.01f64..1.0) {
        let cfg = NonIdealityConfig::new(rs, rneu, 0).unwrap();
        let (m, n) = (s.rows(), s.cols());
        // New positive column n and new negative column n + 1.
        let mut gp = Array2::zeros((m, n + 2));
        let mut gn = Array2::zeros((m, n + 2));
        gp.slice_mut(ndarray::s![.., ..n]).assign(&s.g_pos);
        gn.slice_mut(ndarray::s![.., ..n]).assign(&s.g_neg);
        gp.column_mut(n).fill(g);
        gn.column_mut(n + 1).fill(g);
        let wider = SplitConductance::from_arrays(gp, gn).unwrap();
        let before = degradation_factors(&s, &cfg);
        let after = degradation_factors(&wider, &cfg);
        let (r_s, r_neu) = (cfg.r_s(), cfg.r_neu());
        for i in 0..m {
            prop_assert!(after.source_mult_pos[i] < before.source_mult_pos[i]);
            prop_assert!(after.source_mult_neg[i] < before.source_mult_neg[i]);
            let load: f64 = wider.g_pos.row(i).iter().filter(|&&v| v > 0.0).map(|&v| 1.0 / (1.0 / v + r_neu)).sum();
            prop_assert!((after.source_mult_pos[i] - 1.0 / (1.0 + r_s * load)).abs() < 1e-14);
        }
    }

    #[test]
    fn tiles_partition_the_index_space(s in split(12), tm in 1usize..=12, tn in 1usize..=12) {
        let (m, n) = (tm.min(s.rows()), tn.min(s.cols()));
        let grid = partition(&s, m, n).unwrap();
        prop_assert_eq!(grid.tiles.len(), s.rows().div_ceil(m) * s.cols().div_ceil(n));
        let mut seen = Array2::<u32>::zeros((s.rows(), s.cols()));
        for t in &grid.tiles {
            for i in 0..t.split.rows() {
                for j in 0..t.split.cols() {
                    seen[[t.row0 + i, t.col0 + j]] += 1;
                    prop_assert_eq!(t.split.g_pos[[i, j]], s.g_pos[[t.row0 + i, t.col0 + j]]);
                    prop_assert_eq!(t.split.g_neg[[i, j]], s.g_neg[[t.row0 + i, t.col0 + j]]);
                }
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn single_tile_is_bitwise_forward((s, a) in split_and_input(10), cfg in corner()) {
        let grid = partition(&s, s.rows(), s.cols()).unwrap();
        prop_assert_eq!(tiled_forward(&grid, &cfg, a.view()).unwrap(), forward(&s, &cfg, a.view()).unwrap());
    }

    #[test]
    fn ideal_tiling_matches_the_dot_product((s, a) in split_and_input(12), tm in 1usize..=12, tn in 1usize..=12) {
        let grid = partition(&s, tm.min(s.rows()), tn.min(s.cols())).unwrap();
        let z = tiled_forward(&grid, &NonIdealityConfig::ideal(), a.view()).unwrap();
        let dot = a.dot(&s.signed());
        for (x, y) in z.iter().zip(&dot) {
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn batches_form_a_permutation(count in 0usize..300, size in 1usize..40, seed in any::<u64>()) {
        let b = batches(count, size, seed);
        prop_assert!(b.iter().all(|c| !c.is_empty() && c.len() <= size));
        prop_assert!(b.iter().rev().skip(1).all(|c| c.len() == size));
        let mut all: Vec<usize> = b.into_iter().flatten().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..count).collect::<Vec<_>>());
        prop_assert_eq!(batches(count, size, seed), batches(count, size, seed));
    }
}
