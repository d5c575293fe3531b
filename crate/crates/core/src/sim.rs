//! Synthetic benchmarks, the sparse-quantile protocol, and nested
//! cross-validation.

use log::info;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::distributions::{
    normal_quantile_function, EmpiricalDistribution, GaussianMixtureParams, LevelGrid, QuantileFunction,
};
use crate::error::{Result, WdlError};
use crate::scgmm::{
    predict_params, train_with_split, validation_split, DistributionalDataset, ScgmmConfig, ScgmmModel,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Two-component mixture whose weights, means and scales depend
    /// nonlinearly on three uniform covariates.
    Mixture,
    /// Gaussian outcomes with noisy linear mean and scale.
    Linear,
}

/// Coefficients of the linear scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearParams {
    pub mu0: f64,
    pub sigma0: f64,
    /// Variance of the sampled mean.
    pub v1: f64,
    /// Dispersion of the sampled scale.
    pub v2: f64,
    pub beta: [f64; 3],
    pub gamma: [f64; 3],
}

impl Default for LinearParams {
    fn default() -> Self {
        LinearParams {
            mu0: 0.0,
            sigma0: 3.0,
            v1: 0.25,
            v2: 1.0,
            beta: [1.0, -1.0, 3.0],
            gamma: [0.1, 0.2, 0.3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_samples: usize,
    /// Draws per outcome (mixture scenario).
    pub n_points: usize,
    pub omega: f64,
    pub seed: u64,
    pub scenario: Scenario,
    pub linear: LinearParams,
    /// Levels on which linear-scenario outcomes are tabulated.
    pub grid: LevelGrid,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_samples: 200,
            n_points: 300,
            omega: 0.1,
            seed: 0,
            scenario: Scenario::Mixture,
            linear: LinearParams::default(),
            grid: LevelGrid::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 2 {
            return Err(WdlError::invalid("n_samples must be at least 2"));
        }
        if self.n_points < 2 {
            return Err(WdlError::invalid("n_points must be at least 2"));
        }
        if !(self.omega >= 0.0) || !self.omega.is_finite() {
            return Err(WdlError::invalid("omega must be finite and non-negative"));
        }
        let l = &self.linear;
        if !(l.v1 >= 0.0 && l.v2 >= 0.0) {
            return Err(WdlError::invalid("v1 and v2 must be non-negative"));
        }
        // Covariates lie in [-1, 1]^3, so the scale mean is smallest at the
        // sign-flipped corner.
        let worst = l.sigma0 - l.gamma.iter().map(|g| g.abs()).sum::<f64>();
        if !(worst > 0.0) {
            return Err(WdlError::invalid("sigma0 + gamma'x must stay positive on [-1, 1]^3"));
        }
        Ok(())
    }
}

/// Mixture-scenario parameters at covariate `x` with shared mean shift `eps`.
pub fn mixture_truth(x: &[f64; 3], eps: f64) -> GaussianMixtureParams {
    let pi1 = 1.0 / (1.0 + x[2].exp());
    let comps = [
        (pi1, x[0] + eps, x[1].abs() + 0.5),
        (1.0 - pi1, 2.0 * x[1] * x[1] + 2.0 + eps, x[0].abs() + 0.5),
    ];
    // from_parts sorts by mean; both orders describe the same mixture.
    GaussianMixtureParams::from_parts(
        &[comps[0].0, comps[1].0],
        &[comps[0].1, comps[1].1],
        &[comps[0].2, comps[1].2],
    )
    .expect("scenario parameters are valid")
}

/// Draws `n` labelled points (component index 0 or 1, value) from the
/// mixture scenario at `x`.
pub fn draw_mixture_labelled<R: Rng>(rng: &mut R, x: &[f64; 3], eps: f64, n: usize) -> Vec<(usize, f64)> {
    let pi1 = 1.0 / (1.0 + x[2].exp());
    let c1 = Normal::new(x[0] + eps, x[1].abs() + 0.5).expect("positive scale");
    let c2 = Normal::new(2.0 * x[1] * x[1] + 2.0 + eps, x[0].abs() + 0.5).expect("positive scale");
    (0..n)
        .map(|_| {
            if rng.random::<f64>() < pi1 {
                (0, c1.sample(rng))
            } else {
                (1, c2.sample(rng))
            }
        })
        .collect()
}

fn uniform_covariates<R: Rng>(rng: &mut R, n: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((n, 3), || rng.random_range(-1.0..=1.0))
}

/// Mixture scenario: `x ~ U[-1, 1]^3`, a per-row shift `eps ~ N(0, omega^2)`
/// and `n_points` draws per row.
pub fn simulate_mixture(cfg: &SimConfig) -> Result<DistributionalDataset> {
    cfg.validate()?;
    if cfg.scenario != Scenario::Mixture {
        return Err(WdlError::invalid("simulate_mixture needs the mixture scenario"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let x = uniform_covariates(&mut rng, cfg.n_samples);
    let noise = Normal::new(0.0, cfg.omega).expect("omega validated");
    let mut outcomes = Vec::with_capacity(cfg.n_samples);
    for row in x.rows() {
        let xi = [row[0], row[1], row[2]];
        let eps = noise.sample(&mut rng);
        let draws = draw_mixture_labelled(&mut rng, &xi, eps, cfg.n_points);
        outcomes.push(EmpiricalDistribution::new(draws.into_iter().map(|(_, v)| v).collect())?);
    }
    DistributionalDataset::new(x, outcomes)
}

/// Draws `(mu, sigma)` for the linear scenario at `x`. A zero `v1` or `v2`
/// returns the corresponding mean exactly.
pub fn draw_linear_params<R: Rng>(rng: &mut R, p: &LinearParams, x: &[f64; 3]) -> (f64, f64) {
    let dot = |c: &[f64; 3]| c.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    let mean_mu = p.mu0 + dot(&p.beta);
    let mean_sigma = p.sigma0 + dot(&p.gamma);
    let mu = if p.v1 > 0.0 {
        Normal::new(mean_mu, p.v1.sqrt())
            .expect("positive variance")
            .sample(rng)
    } else {
        mean_mu
    };
    let sigma = if p.v2 > 0.0 {
        let gamma = Gamma::new(mean_sigma * mean_sigma / p.v2, p.v2 / mean_sigma).expect("positive shape");
        loop {
            let s = gamma.sample(rng);
            if s > 0.0 {
                break s;
            }
        }
    } else {
        mean_sigma
    };
    (mu, sigma)
}

/// Linear scenario: `x ~ U[-1, 1]^3`; each outcome is the normal quantile
/// function `mu + sigma * Phi^-1` on `cfg.grid` with randomly drawn
/// `(mu, sigma)`.
pub fn simulate_linear(cfg: &SimConfig) -> Result<DistributionalDataset> {
    cfg.validate()?;
    if cfg.scenario != Scenario::Linear {
        return Err(WdlError::invalid("simulate_linear needs the linear scenario"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let x = uniform_covariates(&mut rng, cfg.n_samples);
    let mut qs = Vec::with_capacity(cfg.n_samples);
    for row in x.rows() {
        let (mu, sigma) = draw_linear_params(&mut rng, &cfg.linear, &[row[0], row[1], row[2]]);
        qs.push(normal_quantile_function(mu, sigma, &cfg.grid)?);
    }
    DistributionalDataset::from_quantiles(x, &qs)
}

pub fn simulate(cfg: &SimConfig) -> Result<DistributionalDataset> {
    match cfg.scenario {
        Scenario::Mixture => simulate_mixture(cfg),
        Scenario::Linear => simulate_linear(cfg),
    }
}

/// Coarse quantile levels, by default `{0.1, ..., 0.9}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseLevels(pub LevelGrid);

impl Default for SparseLevels {
    fn default() -> Self {
        SparseLevels(LevelGrid::uniform(9))
    }
}

/// Restriction of `q` to the sparse levels, each of which must be on `q`'s
/// grid.
pub fn sparsify(q: &QuantileFunction, levels: &SparseLevels) -> Result<QuantileFunction> {
    let values = levels
        .0
        .levels()
        .iter()
        .map(|&s| {
            q.grid()
                .position(s)
                .map(|i| q.values()[i])
                .ok_or_else(|| WdlError::invalid(format!("level {s} is not on the source grid")))
        })
        .collect::<Result<Vec<_>>>()?;
    QuantileFunction::new(levels.0.clone(), values)
}

/// Piecewise-linear interpolation of a sparse quantile function onto
/// `target`, held flat beyond the first and last sparse levels.
pub fn densify(q_sparse: &QuantileFunction, target: &LevelGrid) -> Result<QuantileFunction> {
    let ls = q_sparse.grid().levels();
    let vs = q_sparse.values();
    let last = ls.len() - 1;
    let values = target
        .levels()
        .iter()
        .map(|&s| {
            if s <= ls[0] {
                return vs[0];
            }
            if s >= ls[last] {
                return vs[last];
            }
            let j = ls.partition_point(|&l| l <= s);
            let (l0, l1) = (ls[j - 1], ls[j]);
            let t = (s - l0) / (l1 - l0);
            vs[j - 1] + t * (vs[j] - vs[j - 1])
        })
        .collect::<Vec<_>>();
    QuantileFunction::new(target.clone(), values)
}

/// Squared quantile distance on the sparse levels,
/// `(1/(m+1)) * sum (q1 - q2)^2`.
pub fn quasi_w2(q1: &QuantileFunction, q2: &QuantileFunction) -> Result<f64> {
    crate::distributions::w2_squared(q1, q2)
}

/// Learning rates tried by the inner model selection.
pub const ETA_GRID: [f64; 3] = [0.05, 0.1, 0.2];

#[derive(Debug, Clone)]
pub struct CvFold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// Configuration that won the inner selection.
    pub config: ScgmmConfig,
    /// Model trained on the inner training rows with `config`.
    pub model: ScgmmModel,
}

/// Seeded partition of `0..n` into `folds` test sets whose sizes differ by
/// at most one.
pub fn fold_indices(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 || folds > n {
        return Err(WdlError::invalid(format!("cannot split {n} rows into {folds} folds")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = vec![Vec::new(); folds];
    for (j, i) in idx.into_iter().enumerate() {
        out[j * folds / n].push(i);
    }
    for f in &mut out {
        f.sort_unstable();
    }
    Ok(out)
}

/// Nested cross-validation. Each outer fold holds out one test set; the
/// remaining rows are split again into inner training and validation sets,
/// one model is trained per learning rate in `eta_grid` with early stopping
/// capped at `base.max_boost_iters`, and the one with the lowest validation
/// loss is kept.
pub fn nested_cv(
    data: &DistributionalDataset,
    base: &ScgmmConfig,
    folds: usize,
    inner_validation_fraction: f64,
    eta_grid: &[f64],
    seed: u64,
) -> Result<Vec<CvFold>> {
    base.validate()?;
    if eta_grid.is_empty() {
        return Err(WdlError::invalid("learning-rate grid is empty"));
    }
    let tests = fold_indices(data.n(), folds, seed)?;
    let mut out = Vec::with_capacity(folds);
    for (f, test) in tests.into_iter().enumerate() {
        let mut in_test = vec![false; data.n()];
        test.iter().for_each(|&i| in_test[i] = true);
        let train: Vec<usize> = (0..data.n()).filter(|&i| !in_test[i]).collect();
        let (inner_tr, inner_va) =
            validation_split(train.len(), inner_validation_fraction, seed.wrapping_add(1 + f as u64));
        let inner_tr: Vec<usize> = inner_tr.iter().map(|&j| train[j]).collect();
        let inner_va: Vec<usize> = inner_va.iter().map(|&j| train[j]).collect();
        let mut best: Option<(f64, ScgmmConfig, ScgmmModel)> = None;
        for &eta in eta_grid {
            let cfg = ScgmmConfig {
                learning_rate: eta,
                validation_fraction: inner_validation_fraction,
                ..base.clone()
            };
            let model = train_with_split(data, &cfg, &inner_tr, &inner_va)?;
            let loss = model.trace()[model.best_iteration()].valid_loss;
            info!(
                "fold {f}: eta {eta} validation loss {loss} at iteration {}",
                model.best_iteration()
            );
            if best.as_ref().is_none_or(|b| loss < b.0) {
                best = Some((loss, cfg, model));
            }
        }
        let (_, config, model) = best.expect("grid is non-empty");
        out.push(CvFold {
            train,
            test,
            config,
            model,
        });
    }
    Ok(out)
}

/// Out-of-fold predicted mixtures, in row order.
pub fn cv_predictions(folds: &[CvFold], data: &DistributionalDataset) -> Result<Vec<GaussianMixtureParams>> {
    let mut out: Vec<Option<GaussianMixtureParams>> = vec![None; data.n()];
    for fold in folds {
        for &i in &fold.test {
            let row = data.x().row(i).to_vec();
            out[i] = Some(predict_params(&fold.model, &row)?);
        }
    }
    out.into_iter()
        .enumerate()
        .map(|(i, t)| t.ok_or_else(|| WdlError::invalid(format!("row {i} is in no test fold"))))
        .collect()
}
