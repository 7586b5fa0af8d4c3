//! Writes the resistive circuit of a small crossbar as a netlist and
//! checks the nodal solution against the analytical model.
//!
//! ```text
//! cargo run --example export_netlist -- [out.net]
//! ```

use memxbar::oracle::{export_netlist, CircuitOracle};
use memxbar::tech::{quantize, split_signed, NonIdealityConfig, TechnologyProfile};
use memxbar::xbar::forward;
use ndarray::array;

fn main() -> memxbar::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "crossbar.net".into());
    let w = array![[0.8, -0.3], [-0.5, 0.9], [0.2, 0.6]];
    let split = split_signed(&quantize(w.view(), 100.0)?);
    let tech = TechnologyProfile::preset("TiO2")?;
    let cfg = NonIdealityConfig::new(tech.ratio_of(800.0), tech.ratio_of(200.0), 0)?;
    let a = array![1.0, 0.5, 0.25];

    std::fs::write(&path, export_netlist(&split, &cfg, a.view(), tech.ohms_per_unit())?)?;
    println!("wrote {path}");

    let circuit = CircuitOracle::new(&split, &cfg)?.solve(a.view())?;
    let model = forward(&split, &cfg, a.view())?;
    for (j, (o, m)) in circuit.currents.iter().zip(&model).enumerate() {
        println!("neuron {j}: circuit {o:.6}  model {m:.6}  ideal {:.6}", a.dot(&split.signed().column(j)));
    }
    Ok(())
}
