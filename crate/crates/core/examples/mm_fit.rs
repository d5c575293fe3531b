//! Fit a Gaussian mixture to one sample by minimizing the 2-Wasserstein
//! loss with the MM loop, and print the loss trace.
//!
//! Run with `cargo run --example mm_fit`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use wdl::distributions::{EmpiricalDistribution, LevelGrid};
use wdl::mm::{fit_gmm_mm, MmConfig, PiUpdate};

fn main() -> wdl::error::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let left = Normal::new(-2.0, 0.7).unwrap();
    let right = Normal::new(1.5, 1.0).unwrap();
    let mut points: Vec<f64> = (0..300).map(|_| left.sample(&mut rng)).collect();
    points.extend((0..700).map(|_| right.sample(&mut rng)));
    let g = EmpiricalDistribution::new(points)?;

    for pi_update in [PiUpdate::EmApprox, PiUpdate::ProjectedGradient] {
        let cfg = MmConfig {
            pi_update,
            ..MmConfig::default()
        };
        let (theta, trace) = fit_gmm_mm(&g, 2, &cfg, &LevelGrid::default())?;
        println!(
            "{pi_update:?}: {} iterations, converged {}",
            trace.records.len(),
            trace.converged
        );
        for r in trace.records.iter().take(5) {
            println!(
                "  iter {:>3}  loss {:.6}  surrogate {:.6}",
                r.iteration, r.loss, r.surrogate
            );
        }
        for c in theta.components() {
            println!("  pi {:.3}  mu {:.3}  sd {:.3}", c.weight, c.mean, c.sd);
        }
    }
    Ok(())
}
