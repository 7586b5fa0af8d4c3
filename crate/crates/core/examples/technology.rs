//! Technology presets and the mapping of a trained weight matrix onto
//! 4-bit conductance pairs, including a chip-to-chip variation corner.
//!
//! ```text
//! cargo run --example technology
//! ```

use memxbar::tech::{apply_variation, quantize, split_signed, NonIdealityConfig, TechnologyProfile};
use ndarray::array;

fn main() -> memxbar::Result<()> {
    println!("{:<12} {:>10} {:>10} {:>10}", "preset", "R_low", "R_high", "alpha");
    for name in TechnologyProfile::preset_names() {
        let p = TechnologyProfile::preset(name)?;
        let alpha = p.alpha.map_or("-".to_string(), |a| format!("{a:.2}"));
        println!("{:<12} {:>10.0} {:>10.0} {:>10}", p.name, p.r_low, p.r_high, alpha);
    }

    let tio2 = TechnologyProfile::preset("TiO2")?;
    let rs_ohm = 500.0;
    println!("\n{rs_ohm} ohm source resistance on TiO2 is rs_ratio {:.5}", tio2.ratio_of(rs_ohm));

    let w = array![[0.42, -1.30, 0.05], [-0.61, 0.00, 0.97], [1.12, -0.20, -0.88]];
    let q = quantize(w.view(), 100.0)?;
    println!("\nscale {:.3}, levels (k of 15):\n{}", q.scale, q.magnitudes.mapv(|m| m * 15.0));
    let split = split_signed(&q);
    println!("positive array:\n{}\nnegative array:\n{}", split.g_pos, split.g_neg);

    let minus_two = NonIdealityConfig::new(0.0, 0.0, -2)?;
    let varied = apply_variation(&split, &minus_two);
    println!(
        "after a -2 sigma corner (delta {:.3}), signed conductances:\n{}",
        minus_two.delta(),
        varied.signed()
    );
    Ok(())
}
