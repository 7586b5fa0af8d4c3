//! Circuit-level reference for the analytical crossbar model.
//!
//! The crossbar pair is stamped into a nodal conductance matrix: one node
//! per row of each array (driven through `R_s` by a Norton source of
//! `+a[i]` or `-a[i]`), one node per output column shared by both arrays
//! and tied to ground through `R_neu`, and one conductance per programmed
//! device. The system is solved with a dense Cholesky factorization.
//!
//! `R_s = 0` turns the row nodes into driven nodes and `R_neu = 0` grounds
//! the neuron nodes. Both are eliminated from the unknowns rather than
//! approximated with tiny resistances.

use std::fmt::Write as _;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::tech::{NonIdealityConfig, SplitConductance};

/// Relative residual `||G v - i||_inf / ||i||_inf` a solve must reach.
pub const RESIDUAL_TOL: f64 = 1e-10;

/// Condition estimate above which a system is reported as singular.
pub const CONDITION_LIMIT: f64 = 1e14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeVoltage {
    /// Index into the unknown node voltages.
    Unknown(usize),
    /// Row `i` held at `sign * a[i]` by an ideal source.
    DrivenRow { row: usize, sign: f64 },
}

/// How the output current of one column is read.
#[derive(Debug, Clone, PartialEq)]
pub enum ColumnTap {
    /// Voltage of an unknown node divided by `r_neu`.
    Neuron { node: usize, r_neu: f64 },
    /// Grounded neuron: sum of the device branch currents `g * v_row`.
    Grounded { branches: Vec<(NodeVoltage, f64)> },
}

/// Node conductance matrix, source injections, and output taps for one
/// crossbar pair and one input vector.
#[derive(Debug, Clone)]
pub struct ConductanceSystem {
    pub node_count: usize,
    pub g_matrix: DMatrix<f64>,
    pub i_vector: DVector<f64>,
    /// Node of column `j`, `None` when the neuron is grounded.
    pub column_node_index: Vec<Option<usize>>,
    pub taps: Vec<ColumnTap>,
    /// Input the injections were built from (drives rows when `R_s = 0`).
    pub input: Array1<f64>,
}

/// Topology shared by every input: conductance matrix plus a sparse map
/// from the input vector to the injection vector.
#[derive(Debug, Clone)]
struct Topology {
    rows: usize,
    g_matrix: DMatrix<f64>,
    /// `(node, input row, coefficient)`, `i[node] += coefficient * a[row]`.
    injection: Vec<(usize, usize, f64)>,
    column_node_index: Vec<Option<usize>>,
    taps: Vec<ColumnTap>,
}

impl Topology {
    fn build(s: &SplitConductance, cfg: &NonIdealityConfig) -> Topology {
        let (rows, cols) = (s.rows(), s.cols());
        let (r_s, r_neu) = (cfg.r_s(), cfg.r_neu());
        let mut next = 0usize;
        let mut alloc = || {
            next += 1;
            next - 1
        };

        // Row nodes that carry at least one conducting device.
        let mut row_nodes: Vec<[Option<NodeVoltage>; 2]> = vec![[None, None]; rows];
        for (side, (g, sign)) in [(&s.g_pos, 1.0), (&s.g_neg, -1.0)].into_iter().enumerate() {
            for i in 0..rows {
                if g.row(i).iter().any(|&v| v > 0.0) {
                    row_nodes[i][side] = Some(if r_s > 0.0 {
                        NodeVoltage::Unknown(alloc())
                    } else {
                        NodeVoltage::DrivenRow { row: i, sign }
                    });
                }
            }
        }
        let column_node_index: Vec<Option<usize>> =
            (0..cols).map(|_| if r_neu > 0.0 { Some(alloc()) } else { None }).collect();

        let n = next;
        let mut g_matrix = DMatrix::zeros(n, n);
        let mut injection = Vec::new();
        let mut grounded: Vec<Vec<(NodeVoltage, f64)>> = vec![Vec::new(); cols];

        for (i, nodes) in row_nodes.iter().enumerate() {
            for (side, sign) in [(0, 1.0), (1, -1.0)] {
                if let Some(NodeVoltage::Unknown(k)) = nodes[side] {
                    g_matrix[(k, k)] += 1.0 / r_s;
                    injection.push((k, i, sign / r_s));
                }
            }
        }
        if r_neu > 0.0 {
            for k in column_node_index.iter().flatten() {
                g_matrix[(*k, *k)] += 1.0 / r_neu;
            }
        }
        for (side, g) in [&s.g_pos, &s.g_neg].into_iter().enumerate() {
            for ((i, j), &gij) in g.indexed_iter() {
                if gij <= 0.0 {
                    continue;
                }
                let row = row_nodes[i][side].expect("conducting device implies a row node");
                match (row, column_node_index[j]) {
                    (NodeVoltage::Unknown(a), Some(b)) => {
                        g_matrix[(a, a)] += gij;
                        g_matrix[(b, b)] += gij;
                        g_matrix[(a, b)] -= gij;
                        g_matrix[(b, a)] -= gij;
                    }
                    (NodeVoltage::Unknown(a), None) => {
                        g_matrix[(a, a)] += gij;
                        grounded[j].push((row, gij));
                    }
                    (NodeVoltage::DrivenRow { row, sign }, Some(b)) => {
                        g_matrix[(b, b)] += gij;
                        injection.push((b, row, sign * gij));
                    }
                    (driven @ NodeVoltage::DrivenRow { .. }, None) => grounded[j].push((driven, gij)),
                }
            }
        }
        let taps = column_node_index
            .iter()
            .zip(grounded)
            .map(|(node, branches)| match node {
                Some(node) => ColumnTap::Neuron { node: *node, r_neu },
                None => ColumnTap::Grounded { branches },
            })
            .collect();
        Topology { rows, g_matrix, injection, column_node_index, taps }
    }

    fn injection_for(&self, a: ArrayView1<f64>) -> DVector<f64> {
        let mut i = DVector::zeros(self.g_matrix.nrows());
        for &(node, row, coeff) in &self.injection {
            i[node] += coeff * a[row];
        }
        i
    }
}

fn check_input(rows: usize, a: ArrayView1<f64>) -> Result<()> {
    if a.len() != rows {
        return Err(Error::Dimension(format!("input has {} entries, crossbar has {rows} rows", a.len())));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("oracle input"));
    }
    Ok(())
}

pub fn build_system(s: &SplitConductance, cfg: &NonIdealityConfig, a: ArrayView1<f64>) -> Result<ConductanceSystem> {
    check_input(s.rows(), a)?;
    let topo = Topology::build(s, cfg);
    let i_vector = topo.injection_for(a);
    Ok(ConductanceSystem {
        node_count: topo.g_matrix.nrows(),
        g_matrix: topo.g_matrix,
        i_vector,
        column_node_index: topo.column_node_index,
        taps: topo.taps,
        input: a.to_owned(),
    })
}

#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub currents: Array1<f64>,
    pub node_voltages: DVector<f64>,
    pub residual: f64,
    pub condition_estimate: f64,
}

fn factor(g: &DMatrix<f64>) -> Result<(Option<Cholesky<f64, Dyn>>, f64)> {
    if g.nrows() == 0 {
        return Ok((None, 1.0));
    }
    let chol = Cholesky::new(g.clone()).ok_or(Error::Singular { condition: f64::INFINITY })?;
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| (lo.min(d), hi.max(d)));
    let condition = (hi / lo).powi(2);
    if !condition.is_finite() || condition > CONDITION_LIMIT {
        return Err(Error::Singular { condition });
    }
    Ok((Some(chol), condition))
}

fn relative_residual(g: &DMatrix<f64>, v: &DVector<f64>, i: &DVector<f64>) -> f64 {
    let norm_i = i.amax();
    if norm_i == 0.0 {
        return (g * v).amax();
    }
    (g * v - i).amax() / norm_i
}

fn read_taps(taps: &[ColumnTap], v: &DVector<f64>, a: ArrayView1<f64>) -> Array1<f64> {
    let volt = |n: &NodeVoltage| match *n {
        NodeVoltage::Unknown(k) => v[k],
        NodeVoltage::DrivenRow { row, sign } => sign * a[row],
    };
    taps.iter()
        .map(|tap| match tap {
            ColumnTap::Neuron { node, r_neu } => v[*node] / r_neu,
            ColumnTap::Grounded { branches } => branches.iter().map(|(n, g)| g * volt(n)).sum(),
        })
        .collect()
}

fn solve_one(
    chol: &Option<Cholesky<f64, Dyn>>,
    g: &DMatrix<f64>,
    i: &DVector<f64>,
    condition: f64,
    taps: &[ColumnTap],
    a: ArrayView1<f64>,
) -> Result<OracleSolution> {
    let v = match chol {
        Some(c) => c.solve(i),
        None => DVector::zeros(0),
    };
    let residual = if v.is_empty() { 0.0 } else { relative_residual(g, &v, i) };
    if !(residual < RESIDUAL_TOL) {
        return Err(Error::Residual { residual });
    }
    Ok(OracleSolution { currents: read_taps(taps, &v, a), node_voltages: v, residual, condition_estimate: condition })
}

pub fn solve_currents(sys: &ConductanceSystem) -> Result<OracleSolution> {
    if sys.g_matrix.nrows() != sys.i_vector.len() || sys.g_matrix.nrows() != sys.node_count {
        return Err(Error::Dimension(format!(
            "conductance matrix {:?} vs injection {}",
            sys.g_matrix.shape(),
            sys.i_vector.len()
        )));
    }
    let (chol, condition) = factor(&sys.g_matrix)?;
    solve_one(&chol, &sys.g_matrix, &sys.i_vector, condition, &sys.taps, sys.input.view())
}

/// Factors the conductance matrix once and solves it for many inputs.
pub struct CircuitOracle {
    topo: Topology,
    chol: Option<Cholesky<f64, Dyn>>,
    condition: f64,
}

impl CircuitOracle {
    pub fn new(s: &SplitConductance, cfg: &NonIdealityConfig) -> Result<Self> {
        let topo = Topology::build(s, cfg);
        let (chol, condition) = factor(&topo.g_matrix)?;
        Ok(CircuitOracle { topo, chol, condition })
    }

    pub fn node_count(&self) -> usize {
        self.topo.g_matrix.nrows()
    }

    pub fn condition_estimate(&self) -> f64 {
        self.condition
    }

    pub fn solve(&self, a: ArrayView1<f64>) -> Result<OracleSolution> {
        check_input(self.topo.rows, a)?;
        let i = self.topo.injection_for(a);
        solve_one(&self.chol, &self.topo.g_matrix, &i, self.condition, &self.topo.taps, a)
    }

    /// Output currents for every row of `inputs`, one solve per row.
    pub fn solve_batch(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((inputs.nrows(), self.topo.taps.len()));
        for (row, a) in out.outer_iter_mut().zip(inputs.outer_iter()) {
            let sol = self.solve(a)?;
            let mut row = row;
            row.assign(&sol.currents);
        }
        Ok(out)
    }
}

/// Root-mean-square deviation normalized by the range of the reference.
pub fn nrmsd(model: ArrayView1<f64>, oracle: ArrayView1<f64>) -> Result<f64> {
    if model.len() != oracle.len() || model.is_empty() {
        return Err(Error::Dimension(format!("model {} vs oracle {}", model.len(), oracle.len())));
    }
    let (lo, hi) = oracle.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = hi - lo;
    if !(range > 0.0) {
        return Err(Error::ConstantReference);
    }
    let mse = model.iter().zip(oracle).map(|(m, o)| (m - o).powi(2)).sum::<f64>() / model.len() as f64;
    Ok(mse.sqrt() / range)
}

/// Writes the circuit as `R <node_a> <node_b> <ohms>` and `I <node> <amps>`
/// lines (current injected into the node), node 0 being ground. Rows of
/// the positive array are nodes `1..=M`, the negative array `M+1..=2M`,
/// neurons `2M+1..=2M+N`. Lines starting with `*` are comments.
///
/// `ohms_per_unit` converts normalized resistances to ohms (the `R_low`
/// of a technology profile, or 1 to stay normalized).
pub fn export_netlist(
    s: &SplitConductance,
    cfg: &NonIdealityConfig,
    a: ArrayView1<f64>,
    ohms_per_unit: f64,
) -> Result<String> {
    check_input(s.rows(), a)?;
    let (r_s, r_neu) = (cfg.r_s(), cfg.r_neu());
    if !(r_s > 0.0 && r_neu > 0.0) {
        return Err(Error::Config("netlist export needs nonzero source and neuron resistances".into()));
    }
    let (rows, cols) = (s.rows(), s.cols());
    let neuron = |j: usize| 2 * rows + j + 1;
    let mut out = String::new();
    let _ = writeln!(out, "* crossbar {rows}x{cols}, rs_ratio {}, rneu_ratio {}, delta {}", cfg.rs_ratio, cfg.rneu_ratio, cfg.delta());
    let _ = writeln!(out, "* nodes: 1..={rows} positive rows, {}..={} negative rows, {}..={} neurons", rows + 1, 2 * rows, neuron(0), neuron(cols - 1));
    for (side, (g, sign)) in [(&s.g_pos, 1.0), (&s.g_neg, -1.0)].into_iter().enumerate() {
        for i in 0..rows {
            if !g.row(i).iter().any(|&v| v > 0.0) {
                continue;
            }
            let node = side * rows + i + 1;
            let _ = writeln!(out, "R {node} 0 {:e}", r_s * ohms_per_unit);
            let _ = writeln!(out, "I {node} {:e}", sign * a[i] / (r_s * ohms_per_unit));
            for (j, &gij) in g.row(i).iter().enumerate() {
                if gij > 0.0 {
                    let _ = writeln!(out, "R {node} {} {:e}", neuron(j), ohms_per_unit / gij);
                }
            }
        }
    }
    for j in 0..cols {
        let _ = writeln!(out, "R {} 0 {:e}", neuron(j), r_neu * ohms_per_unit);
    }
    Ok(out)
}
