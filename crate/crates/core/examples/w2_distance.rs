//! Quantile-grid and closed-form 2-Wasserstein distances.
//!
//! Run with `cargo run --example w2_distance`.

use wdl::distributions::{
    empirical_quantiles, gaussian_w2, gmm_quantile_function, normal_quantile_function, w2_squared, w2_squared_exact,
    EmpiricalDistribution, GaussianMixtureParams, LevelGrid,
};

fn main() -> wdl::error::Result<()> {
    let grid = LevelGrid::default();

    let a = normal_quantile_function(0.0, 1.0, &grid)?;
    let b = normal_quantile_function(1.0, 2.0, &grid)?;
    println!("N(0,1) vs N(1,4)");
    println!("  grid W2   {:.4}", w2_squared(&a, &b)?.sqrt());
    println!("  exact W2  {:.4}", gaussian_w2(0.0, 1.0, 1.0, 2.0)?);

    // A sample against a two-component mixture.
    let theta = GaussianMixtureParams::from_parts(&[0.3, 0.7], &[-1.0, 2.0], &[0.5, 1.0])?;
    let sample = EmpiricalDistribution::new((0..200).map(|i| -2.0 + 6.0 * i as f64 / 199.0).collect())?;
    let grid_sq = w2_squared(
        &empirical_quantiles(&sample, &grid),
        &gmm_quantile_function(&theta, &grid)?,
    )?;
    println!("uniform sample vs mixture");
    println!("  grid W2^2   {grid_sq:.4}");
    println!("  exact W2^2  {:.4}", w2_squared_exact(&sample, &theta)?);
    Ok(())
}
