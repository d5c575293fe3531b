//! Train the boosted conditional mixture on simulated data, then save and
//! reload it.
//!
//! Run with `cargo run --release --example boosted_training`.

use wdl::distributions::LevelGrid;
use wdl::eval::prediction_loss;
use wdl::scgmm::{predict_quantiles, train, ScgmmConfig, ScgmmModel};
use wdl::sim::{simulate, SimConfig};

fn main() -> wdl::error::Result<()> {
    let data = simulate(&SimConfig {
        omega: 0.1,
        seed: 7,
        ..SimConfig::default()
    })?;
    let cfg = ScgmmConfig {
        k: 2,
        learning_rate: 0.2,
        ..ScgmmConfig::default()
    };
    let model = train(&data, &cfg)?;
    for r in model.trace().iter().step_by(10) {
        println!(
            "iter {:>3}  train {:.4}  valid {:.4}",
            r.iteration, r.train_loss, r.valid_loss
        );
    }
    println!("kept {} iterations", model.best_iteration());

    let grid = LevelGrid::default();
    let pred = data
        .x()
        .rows()
        .into_iter()
        .map(|r| predict_quantiles(&model, &r.to_vec(), &grid))
        .collect::<wdl::error::Result<Vec<_>>>()?;
    let report = prediction_loss(&data.quantiles(&grid), &pred)?;
    println!("in-sample loss {:.4}, R2 {:.3}", report.mean_loss, report.r_squared);

    let bytes = model.serialize()?;
    let back = ScgmmModel::deserialize(&bytes)?;
    assert_eq!(back, model);
    println!("model JSON is {} bytes", bytes.len());
    Ok(())
}
