//! Cross-checks the circuit oracle against an independent modified nodal
//! analysis of the unreduced circuit (ideal voltage sources as extra
//! unknowns, every row node present whether or not it carries devices),
//! solved by Gaussian elimination with partial pivoting. The exported
//! netlist is re-parsed and solved the same way.

use memxbar::oracle::{build_system, export_netlist, solve_currents, CircuitOracle};
use memxbar::tech::{NonIdealityConfig, SplitConductance};
use memxbar::xbar;
use ndarray::{array, Array1, Array2};
use proptest::prelude::*;

fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let p = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs())).unwrap();
        a.swap(col, p);
        b.swap(col, p);
        assert!(a[col][col].abs() > 1e-300, "singular reference system");
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Full MNA: per row and array a source node and a row node, one neuron
/// node per column, and one branch-current unknown per voltage source.
fn reference_currents(s: &SplitConductance, r_s: f64, r_neu: f64, a: &Array1<f64>) -> (usize, Vec<f64>) {
    let (m, n) = (s.rows(), s.cols());
    let src = |side: usize, i: usize| side * m + i;
    let row = |side: usize, i: usize| 2 * m + side * m + i;
    let neu = |j: usize| 4 * m + j;
    let nodes = 4 * m + n;
    let size = nodes + 2 * m;
    let mut g = vec![vec![0.0; size]; size];
    let mut rhs = vec![0.0; size];
    let stamp = |g: &mut Vec<Vec<f64>>, p: usize, q: Option<usize>, c: f64| {
        g[p][p] += c;
        if let Some(q) = q {
            g[q][q] += c;
            g[p][q] -= c;
            g[q][p] -= c;
        }
    };
    for side in 0..2 {
        let arr = if side == 0 { &s.g_pos } else { &s.g_neg };
        let sign = if side == 0 { 1.0 } else { -1.0 };
        for i in 0..m {
            stamp(&mut g, src(side, i), Some(row(side, i)), 1.0 / r_s);
            for j in 0..n {
                if arr[[i, j]] > 0.0 {
                    stamp(&mut g, row(side, i), Some(neu(j)), arr[[i, j]]);
                }
            }
            let k = nodes + side * m + i;
            g[src(side, i)][k] += 1.0;
            g[k][src(side, i)] += 1.0;
            rhs[k] = sign * a[i];
        }
    }
    for j in 0..n {
        stamp(&mut g, neu(j), None, 1.0 / r_neu);
    }
    let x = gauss_solve(g, rhs);
    (2 * m + n, (0..n).map(|j| x[neu(j)] / r_neu).collect())
}

fn cfg(rs_ratio: f64, rneu_ratio: f64) -> NonIdealityConfig {
    NonIdealityConfig { rs_ratio, rneu_ratio, ..NonIdealityConfig::ideal() }
}

#[test]
fn two_by_two_mixed_sign_matches_reference() {
    let s = SplitConductance::from_arrays(array![[1.0, 0.0], [0.0, 0.4]], array![[0.0, 0.6], [0.8, 0.0]]).unwrap();
    let c = cfg(0.0027, 0.00067);
    let a = array![0.9, 0.35];
    let (nodes, reference) = reference_currents(&s, c.r_s(), c.r_neu(), &a);
    assert_eq!(nodes, 6);
    let sys = build_system(&s, &c, a.view()).unwrap();
    assert_eq!(sys.node_count, 6);
    let sol = solve_currents(&sys).unwrap();
    for (o, r) in sol.currents.iter().zip(&reference) {
        assert!((o - r).abs() < 1e-10, "{o} vs {r}");
    }
    assert!(sol.residual < 1e-10);
}

#[test]
fn single_cell_series_circuit() {
    let s = SplitConductance::from_arrays(array![[1.0]], array![[0.0]]).unwrap();
    let c = NonIdealityConfig { rs_ratio: 0.1 / 15.0, rneu_ratio: 0.1 / 15.0, ..NonIdealityConfig::ideal() };
    let sys = build_system(&s, &c, array![1.0].view()).unwrap();
    assert_eq!(sys.node_count, 2);
    let i = solve_currents(&sys).unwrap().currents[0];
    assert!((i - 1.0 / 1.2).abs() < 1e-12);
}

fn split_strategy(max: usize) -> impl Strategy<Value = (SplitConductance, Array1<f64>)> {
    (1..=max, 1..=max).prop_flat_map(|(m, n)| {
        (
            proptest::collection::vec((0u8..16, 0u8..3), m * n),
            proptest::collection::vec(0.0f64..1.0, m),
        )
            .prop_map(move |(cells, a)| {
                let mut gp = Array2::zeros((m, n));
                let mut gn = Array2::zeros((m, n));
                for (k, (level, side)) in cells.into_iter().enumerate() {
                    let g = f64::from(level) / 15.0;
                    match side {
                        0 => gp[[k / n, k % n]] = g,
                        1 => gn[[k / n, k % n]] = g,
                        _ => {}
                    }
                }
                (SplitConductance::from_arrays(gp, gn).unwrap(), Array1::from(a))
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn oracle_matches_unreduced_reference(
        (s, a) in split_strategy(6),
        rs in 0.0001f64..0.05,
        rneu in 0.0001f64..0.05,
    ) {
        let c = cfg(rs, rneu);
        let (_, reference) = reference_currents(&s, c.r_s(), c.r_neu(), &a);
        let sol = CircuitOracle::new(&s, &c).unwrap().solve(a.view()).unwrap();
        for (o, r) in sol.currents.iter().zip(&reference) {
            prop_assert!((o - r).abs() <= 1e-10 * (1.0 + r.abs()), "{} vs {}", o, r);
        }
    }

    #[test]
    fn system_is_symmetric_and_conserves_current((s, a) in split_strategy(5), rs in 0.0f64..0.05, rneu in 0.0f64..0.05) {
        let sys = build_system(&s, &cfg(rs, rneu), a.view()).unwrap();
        prop_assert_eq!(sys.g_matrix.clone(), sys.g_matrix.transpose());
        if sys.node_count > 0 {
            let sol = solve_currents(&sys).unwrap();
            let kcl = &sys.g_matrix * &sol.node_voltages - &sys.i_vector;
            let scale = sys.i_vector.amax().max(1e-300);
            prop_assert!(kcl.amax() / scale < 1e-10);
        }
    }

    #[test]
    fn ideal_circuit_is_the_dot_product((s, a) in split_strategy(6)) {
        let sol = CircuitOracle::new(&s, &NonIdealityConfig::ideal()).unwrap().solve(a.view()).unwrap();
        let dot = a.dot(&s.signed());
        for (o, d) in sol.currents.iter().zip(&dot) {
            prop_assert!((o - d).abs() <= 1e-14 * (1.0 + d.abs()));
        }
    }

    #[test]
    fn single_cell_model_oracle_formula_agree(g in 0.01f64..1.0, rs in 0.0f64..1.0, rneu in 0.0f64..1.0, a in 0.0f64..1.0) {
        let s = SplitConductance::from_arrays(array![[g]], array![[0.0]]).unwrap();
        let c = NonIdealityConfig { rs_ratio: rs / 15.0, rneu_ratio: rneu / 15.0, ..NonIdealityConfig::ideal() };
        let exact = a / (c.r_s() + 1.0 / g + c.r_neu());
        let model = xbar::forward(&s, &c, array![a].view()).unwrap()[0];
        let oracle = CircuitOracle::new(&s, &c).unwrap().solve(array![a].view()).unwrap().currents[0];
        prop_assert!((model - exact).abs() <= 1e-12 * exact.abs().max(1e-300));
        prop_assert!((oracle - exact).abs() <= 1e-12 * exact.abs().max(1e-300));
    }

    #[test]
    fn netlist_solves_to_oracle_currents((s, a) in split_strategy(5), rs in 0.0005f64..0.05, rneu in 0.0005f64..0.05, ohms in 1.0f64..1e5) {
        let c = cfg(rs, rneu);
        let text = export_netlist(&s, &c, a.view(), ohms).unwrap();
        let (m, n) = (s.rows(), s.cols());
        let nodes = 2 * m + n;
        let mut g = vec![vec![0.0; nodes]; nodes];
        let mut rhs = vec![0.0; nodes];
        let mut neuron_r = vec![0.0; n];
        for line in text.lines().filter(|l| !l.starts_with('*')) {
            let f: Vec<&str> = line.split_whitespace().collect();
            match f[0] {
                "R" => {
                    let (p, q, r): (usize, usize, f64) = (f[1].parse().unwrap(), f[2].parse().unwrap(), f[3].parse().unwrap());
                    let c = 1.0 / r;
                    g[p - 1][p - 1] += c;
                    if q > 0 {
                        g[q - 1][q - 1] += c;
                        g[p - 1][q - 1] -= c;
                        g[q - 1][p - 1] -= c;
                    } else if p > 2 * m {
                        neuron_r[p - 2 * m - 1] = r;
                    }
                }
                "I" => rhs[f[1].parse::<usize>().unwrap() - 1] += f[2].parse::<f64>().unwrap(),
                other => panic!("unexpected netlist line kind {other}"),
            }
        }
        // Row nodes without devices are absent from the netlist; pin them.
        for k in 0..nodes {
            if g[k][k] == 0.0 {
                g[k][k] = 1.0;
            }
        }
        let v = gauss_solve(g, rhs);
        let oracle = CircuitOracle::new(&s, &c).unwrap().solve(a.view()).unwrap().currents;
        for j in 0..n {
            let amps = v[2 * m + j] / neuron_r[j];
            prop_assert!((amps * ohms - oracle[j]).abs() <= 1e-9 * (1.0 + oracle[j].abs()), "{} vs {}", amps * ohms, oracle[j]);
        }
    }
}
