//! Functional partial dependence and averaged component parameters.
//!
//! Run with `cargo run --release --example pdp_params`.

use wdl::eval::{functional_pdp, marginal_param_curve};
use wdl::scgmm::{train, ScgmmConfig};
use wdl::sim::{simulate, SimConfig};

fn main() -> wdl::error::Result<()> {
    let data = simulate(&SimConfig {
        seed: 7,
        ..SimConfig::default()
    })?;
    let model = train(
        &data,
        &ScgmmConfig {
            learning_rate: 0.1,
            max_boost_iters: 200,
            ..ScgmmConfig::default()
        },
    )?;
    let xs: Vec<f64> = (0..9).map(|i| -1.0 + 0.25 * i as f64).collect();

    let w = marginal_param_curve(&model, data.x().view(), 2, &xs)?;
    println!("x3      pi1     truth");
    for (x, pi) in xs.iter().zip(&w.weights) {
        println!("{x:>5.2}  {:.3}   {:.3}", pi[0], 1.0 / (1.0 + x.exp()));
    }

    let m = marginal_param_curve(&model, data.x().view(), 1, &xs)?;
    println!("\nx2      mu2     truth");
    for (x, mu) in xs.iter().zip(&m.means) {
        println!("{x:>5.2}  {:.3}   {:.3}", mu[1], 2.0 * x * x + 2.0);
    }

    for rho in [0.1, 0.5, 0.9] {
        let c = functional_pdp(&model, data.x().view(), 0, &xs, rho)?;
        let v: Vec<String> = c.values.iter().map(|v| format!("{v:.2}")).collect();
        println!("\nrho {rho} quantile vs x1: {}", v.join(" "));
    }
    Ok(())
}
