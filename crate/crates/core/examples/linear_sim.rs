//! Linear location-scale scenario: the fitted conditional median should move
//! roughly linearly with each covariate, with slopes near (1, -1, 3).
//!
//! Run with `cargo run --release --example linear_sim`.

use wdl::eval::functional_pdp;
use wdl::scgmm::{train, ScgmmConfig};
use wdl::sim::{simulate, Scenario, SimConfig};

fn main() -> wdl::error::Result<()> {
    let data = simulate(&SimConfig {
        scenario: Scenario::Linear,
        seed: 11,
        ..SimConfig::default()
    })?;
    let model = train(&data, &ScgmmConfig::default())?;
    let xs: Vec<f64> = (0..11).map(|i| -1.0 + 0.2 * i as f64).collect();
    for f in 0..3 {
        let c = functional_pdp(&model, data.x().view(), f, &xs, 0.5)?;
        let slope = (c.values[10] - c.values[0]) / 2.0;
        let v: Vec<String> = c.values.iter().map(|v| format!("{v:.2}")).collect();
        println!("x{}: end-to-end slope {slope:.2}  [{}]", f + 1, v.join(" "));
    }
    Ok(())
}
