//! Training from nine observed quantiles per outcome: interpolate onto the
//! dense grid, fit, and score on the observed levels only.
//!
//! Run with `cargo run --release --example sparse_quantiles`.

use wdl::distributions::{gmm_quantile_function, LevelGrid, QuantileFunction};
use wdl::eval::prediction_loss;
use wdl::scgmm::{predict_params, train_with_split, DistributionalDataset, ScgmmConfig};
use wdl::sim::{densify, fold_indices, simulate, sparsify, SimConfig, SparseLevels};

fn main() -> wdl::error::Result<()> {
    let data = simulate(&SimConfig {
        seed: 3,
        ..SimConfig::default()
    })?;
    let dense = LevelGrid::default();
    let sparse = SparseLevels::default();
    let observed = data
        .quantiles(&dense)
        .iter()
        .map(|q| sparsify(q, &sparse))
        .collect::<wdl::error::Result<Vec<QuantileFunction>>>()?;
    let filled = observed
        .iter()
        .map(|q| densify(q, &dense))
        .collect::<wdl::error::Result<Vec<_>>>()?;
    let fit_data = DistributionalDataset::from_quantiles(data.x().clone(), &filled)?;

    // One hold-out fold for testing, the next one for early stopping.
    let folds = fold_indices(data.n(), 5, 3)?;
    let (test, valid) = (&folds[0], &folds[1]);
    let train_rows: Vec<usize> = folds[2..].iter().flatten().copied().collect();
    let cfg = ScgmmConfig {
        learning_rate: 0.2,
        ..ScgmmConfig::default()
    };
    let model = train_with_split(&fit_data, &cfg, &train_rows, valid)?;

    let pred = test
        .iter()
        .map(|&i| gmm_quantile_function(&predict_params(&model, &data.x().row(i).to_vec())?, &sparse.0))
        .collect::<wdl::error::Result<Vec<_>>>()?;
    let obs: Vec<QuantileFunction> = test.iter().map(|&i| observed[i].clone()).collect();
    let r = prediction_loss(&obs, &pred)?;
    println!(
        "held-out quasi loss {:.4}, R2 {:.3} on {} rows",
        r.mean_loss,
        r.r_squared,
        test.len()
    );
    Ok(())
}
