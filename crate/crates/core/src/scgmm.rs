//! Conditional Gaussian mixtures whose parameters are boosted tree ensembles
//! of the covariates.
//!
//! Each of the `K` components carries three natural parameters: a softmax
//! logit `alpha_k`, a mean `mu_k` and a log standard deviation `z_k`. Every
//! boosting iteration takes one MM step per training sample (component
//! refit, then weight update), fits a regression tree to the gap between
//! each per-sample target and the current prediction, and appends it with
//! the learning rate. A held-out validation split drives early stopping.

use log::{debug, info};
use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{
    empirical_quantiles, gmm_quantile_function, w2_squared, Component, EmpiricalDistribution, GaussianMixtureParams,
    LevelGrid, QuantileFunction,
};
use crate::error::{Result, WdlError};
use crate::mm::{decompose, slice_init, update_components, update_sample_weights, MmConfig, PiUpdate};
use crate::trees::{ensemble_predict, fit_tree, RegressionTree, TreeEnsemble, TreeNode, TreeParams};

pub const SCHEMA_VERSION: u32 = 1;

const LINK_SD_MIN: f64 = 1e-6;
const LINK_SD_MAX: f64 = 1e6;
const WEIGHT_LOG_FLOOR: f64 = 1e-12;

/// Unconstrained parameters of one mixture, indexed by component.
#[derive(Debug, Clone, PartialEq)]
pub struct NaturalParams {
    pub alpha: Vec<f64>,
    pub mu: Vec<f64>,
    pub z: Vec<f64>,
}

impl NaturalParams {
    pub fn k(&self) -> usize {
        self.mu.len()
    }
}

/// Softmax weights, exponentiated scales; components come back sorted by
/// mean.
pub fn link(natural: &NaturalParams) -> Result<GaussianMixtureParams> {
    let k = natural.k();
    if k == 0 || natural.alpha.len() != k || natural.z.len() != k {
        return Err(WdlError::invalid(
            "natural parameter vectors must share a positive length",
        ));
    }
    let all = natural.alpha.iter().chain(&natural.mu).chain(&natural.z);
    if all.clone().any(|v| !v.is_finite()) {
        return Err(WdlError::invalid("natural parameters must be finite"));
    }
    let max = natural.alpha.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = natural.alpha.iter().map(|a| (a - max).exp()).collect();
    let total: f64 = e.iter().sum();
    let comps = (0..k)
        .map(|j| Component {
            weight: e[j] / total,
            mean: natural.mu[j],
            sd: natural.z[j].exp().clamp(LINK_SD_MIN, LINK_SD_MAX),
        })
        .collect();
    GaussianMixtureParams::new(comps)
}

/// Centered logits and log scales. Zero weights are floored before the log.
pub fn unlink(theta: &GaussianMixtureParams) -> NaturalParams {
    let logs: Vec<f64> = theta
        .components()
        .iter()
        .map(|c| {
            if c.weight < WEIGHT_LOG_FLOOR {
                debug!("flooring mixture weight {} before taking logs", c.weight);
            }
            c.weight.max(WEIGHT_LOG_FLOOR).ln()
        })
        .collect();
    let center = logs.iter().sum::<f64>() / logs.len() as f64;
    NaturalParams {
        alpha: logs.iter().map(|l| l - center).collect(),
        mu: theta.means(),
        z: theta.sds().iter().map(|s| s.ln()).collect(),
    }
}

/// Which natural parameter an ensemble models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    Alpha,
    Mu,
    Z,
}

impl ParamKind {
    pub const ALL: [ParamKind; 3] = [ParamKind::Alpha, ParamKind::Mu, ParamKind::Z];

    fn slot(self) -> usize {
        match self {
            ParamKind::Alpha => 0,
            ParamKind::Mu => 1,
            ParamKind::Z => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScgmmConfig {
    pub k: usize,
    pub learning_rate: f64,
    pub max_boost_iters: usize,
    pub early_stop_patience: usize,
    pub validation_fraction: f64,
    pub tree: TreeParams,
    pub grid: LevelGrid,
    pub seed: u64,
    pub pi_update: PiUpdate,
    /// Start every ensemble at zero instead of at pooled-data values.
    #[serde(default)]
    pub strict_zero_init: bool,
}

impl Default for ScgmmConfig {
    fn default() -> Self {
        ScgmmConfig {
            k: 2,
            learning_rate: 0.1,
            max_boost_iters: 100,
            early_stop_patience: 5,
            validation_fraction: 0.2,
            tree: TreeParams::default(),
            grid: LevelGrid::default(),
            seed: 0,
            pi_update: PiUpdate::default(),
            strict_zero_init: false,
        }
    }
}

impl ScgmmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(WdlError::invalid("k must be at least 1"));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(WdlError::invalid("learning rate must be positive"));
        }
        if self.max_boost_iters == 0 {
            return Err(WdlError::invalid("max_boost_iters must be at least 1"));
        }
        if self.early_stop_patience == 0 {
            return Err(WdlError::invalid("early_stop_patience must be at least 1"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(WdlError::invalid("validation_fraction must lie in (0, 1)"));
        }
        self.tree.validate()
    }
}

/// Covariate rows paired with outcome distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionalDataset {
    x: Array2<f64>,
    outcomes: Vec<EmpiricalDistribution>,
}

impl DistributionalDataset {
    pub fn new(x: Array2<f64>, outcomes: Vec<EmpiricalDistribution>) -> Result<Self> {
        if x.nrows() != outcomes.len() {
            return Err(WdlError::invalid(format!(
                "{} covariate rows but {} outcomes",
                x.nrows(),
                outcomes.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(WdlError::invalid("covariates must be finite"));
        }
        Ok(DistributionalDataset { x, outcomes })
    }

    /// Treats each quantile function's grid values as equally weighted atoms.
    /// The resulting sample has exactly the same quantiles on that grid.
    pub fn from_quantiles(x: Array2<f64>, outcomes: &[QuantileFunction]) -> Result<Self> {
        let dists = outcomes
            .iter()
            .map(|q| EmpiricalDistribution::new(q.values().to_vec()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(x, dists)
    }

    pub fn n(&self) -> usize {
        self.outcomes.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn outcomes(&self) -> &[EmpiricalDistribution] {
        &self.outcomes
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        DistributionalDataset {
            x: self.x.select(Axis(0), rows),
            outcomes: rows.iter().map(|&i| self.outcomes[i].clone()).collect(),
        }
    }

    pub fn quantiles(&self, grid: &LevelGrid) -> Vec<QuantileFunction> {
        self.outcomes.iter().map(|g| empirical_quantiles(g, grid)).collect()
    }
}

/// Mean per-sample losses after one boosting iteration (0 is the initial
/// model).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScgmmModel {
    config: ScgmmConfig,
    n_features: usize,
    /// `3K` ensembles, laid out as all alphas, then all means, then all log
    /// scales.
    ensembles: Vec<TreeEnsemble>,
    trace: Vec<TraceRecord>,
    best_iteration: usize,
    final_loss: f64,
}

impl ScgmmModel {
    pub fn config(&self) -> &ScgmmConfig {
        &self.config
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn k(&self) -> usize {
        self.config.k
    }

    pub fn grid(&self) -> &LevelGrid {
        &self.config.grid
    }

    pub fn ensemble(&self, param: ParamKind, component: usize) -> &TreeEnsemble {
        &self.ensembles[param.slot() * self.config.k + component]
    }

    pub fn ensembles(&self) -> &[TreeEnsemble] {
        &self.ensembles
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    /// Iteration whose validation loss was lowest; the ensembles hold exactly
    /// this many trees.
    pub fn best_iteration(&self) -> usize {
        self.best_iteration
    }

    /// Mean loss of the returned model over every row it was trained on
    /// (training and validation).
    pub fn final_loss(&self) -> f64 {
        self.final_loss
    }

    /// Trace as whitespace-separated lines `iteration train_loss valid_loss`.
    pub fn trace_text(&self) -> String {
        let mut out = String::from("iteration train_loss valid_loss\n");
        for r in &self.trace {
            out.push_str(&format!("{} {} {}\n", r.iteration, r.train_loss, r.valid_loss));
        }
        out
    }

    /// Builds a model from ensembles directly, with an empty trace.
    pub fn from_ensembles(config: ScgmmConfig, n_features: usize, ensembles: Vec<TreeEnsemble>) -> Result<Self> {
        config.validate()?;
        if ensembles.len() != 3 * config.k {
            return Err(WdlError::invalid(format!(
                "expected {} ensembles, got {}",
                3 * config.k,
                ensembles.len()
            )));
        }
        if ensembles
            .iter()
            .flat_map(|e| e.trees())
            .any(|t| t.n_features() != n_features)
        {
            return Err(WdlError::invalid("tree dimension differs from model dimension"));
        }
        Ok(ScgmmModel {
            config,
            n_features,
            ensembles,
            trace: Vec::new(),
            best_iteration: 0,
            final_loss: f64::NAN,
        })
    }

    pub fn predict_natural(&self, x: &[f64]) -> Result<NaturalParams> {
        if x.len() != self.n_features {
            return Err(WdlError::invalid(format!(
                "covariate vector has {} entries, model expects {}",
                x.len(),
                self.n_features
            )));
        }
        if let Some(j) = x.iter().position(|v| !v.is_finite()) {
            return Err(WdlError::invalid(format!("covariate {j} is not finite")));
        }
        let k = self.config.k;
        let eval = |slot: usize| -> Result<Vec<f64>> {
            self.ensembles[slot * k..(slot + 1) * k]
                .iter()
                .map(|e| ensemble_predict(e, x))
                .collect()
        };
        Ok(NaturalParams {
            alpha: eval(0)?,
            mu: eval(1)?,
            z: eval(2)?,
        })
    }

    pub fn serialize(&self) -> Result<Vec<u8>> {
        let doc = ModelDoc {
            schema_version: SCHEMA_VERSION,
            config: self.config.clone(),
            n_features: self.n_features,
            ensembles: self
                .ensembles
                .iter()
                .enumerate()
                .map(|(i, e)| EnsembleDoc {
                    param: ParamKind::ALL[i / self.config.k],
                    component: i % self.config.k,
                    base: e.base_value,
                    trees: e.trees().iter().map(RegressionTree::to_nested).collect(),
                })
                .collect(),
            best_iteration: self.best_iteration,
            final_loss: self.final_loss.is_finite().then_some(self.final_loss),
            trace: self.trace.clone(),
        };
        serde_json::to_vec_pretty(&doc).map_err(|e| WdlError::Decode(e.to_string()))
    }

    pub fn deserialize(bytes: &[u8]) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_slice(bytes).map_err(|e| WdlError::Decode(e.to_string()))?;
        match value.get("schema_version").and_then(|v| v.as_u64()) {
            Some(v) if v == SCHEMA_VERSION as u64 => {}
            Some(v) => {
                return Err(WdlError::Decode(format!(
                    "schema version {v} is not supported (expected {SCHEMA_VERSION})"
                )))
            }
            None => return Err(WdlError::Decode("missing schema_version".into())),
        }
        let doc: ModelDoc = serde_json::from_value(value).map_err(|e| WdlError::Decode(e.to_string()))?;
        doc.config
            .validate()
            .map_err(|e| WdlError::Decode(format!("invalid config: {e}")))?;
        let k = doc.config.k;
        if doc.ensembles.len() != 3 * k {
            return Err(WdlError::Decode(format!(
                "expected {} ensembles, found {}",
                3 * k,
                doc.ensembles.len()
            )));
        }
        let mut ensembles = Vec::with_capacity(3 * k);
        for (i, e) in doc.ensembles.iter().enumerate() {
            if e.param != ParamKind::ALL[i / k] || e.component != i % k {
                return Err(WdlError::Decode(format!("ensemble {i} is out of order")));
            }
            let mut ens =
                TreeEnsemble::new(e.base, doc.config.learning_rate).map_err(|err| WdlError::Decode(err.to_string()))?;
            for t in &e.trees {
                ens.push(RegressionTree::from_nested(t, doc.n_features)?);
            }
            ensembles.push(ens);
        }
        Ok(ScgmmModel {
            config: doc.config,
            n_features: doc.n_features,
            ensembles,
            trace: doc.trace,
            best_iteration: doc.best_iteration,
            final_loss: doc.final_loss.unwrap_or(f64::NAN),
        })
    }
}

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    schema_version: u32,
    config: ScgmmConfig,
    n_features: usize,
    ensembles: Vec<EnsembleDoc>,
    best_iteration: usize,
    final_loss: Option<f64>,
    trace: Vec<TraceRecord>,
}

#[derive(Serialize, Deserialize)]
struct EnsembleDoc {
    param: ParamKind,
    component: usize,
    base: f64,
    trees: Vec<TreeNode>,
}

pub fn predict_params(model: &ScgmmModel, x: &[f64]) -> Result<GaussianMixtureParams> {
    link(&model.predict_natural(x)?)
}

pub fn predict_quantiles(model: &ScgmmModel, x: &[f64], grid: &LevelGrid) -> Result<QuantileFunction> {
    gmm_quantile_function(&predict_params(model, x)?, grid)
}

/// Seeded shuffle of the rows into (training, validation) index sets.
pub fn validation_split(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_valid = ((fraction * n as f64).round() as usize).clamp(1, n.saturating_sub(1));
    let valid = idx.split_off(n - n_valid);
    (idx, valid)
}

/// Trains on a seeded training/validation split of `data`.
pub fn train(data: &DistributionalDataset, cfg: &ScgmmConfig) -> Result<ScgmmModel> {
    cfg.validate()?;
    if data.n() < 20 {
        return Err(WdlError::invalid(format!(
            "training needs at least 20 rows, got {}",
            data.n()
        )));
    }
    let (tr, va) = validation_split(data.n(), cfg.validation_fraction, cfg.seed);
    train_with_split(data, cfg, &tr, &va)
}

/// Initial base values `(alpha, mu, z)` per component.
fn initial_bases(data: &DistributionalDataset, rows: &[usize], cfg: &ScgmmConfig) -> Result<Vec<[f64; 3]>> {
    let k = cfg.k;
    if cfg.strict_zero_init {
        return Ok(vec![[0.0; 3]; k]);
    }
    let share = 1.0 / rows.len() as f64;
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for &i in rows {
        let g = &data.outcomes[i];
        points.extend_from_slice(g.points());
        weights.extend(g.weights().iter().map(|w| w * share));
    }
    let pooled = EmpiricalDistribution::from_unnormalized(points, weights)?;
    let slices = slice_init(&pooled, k)?;
    let z = pooled.variance().sqrt().max(LINK_SD_MIN).ln();
    Ok(slices.means().iter().map(|&m| [0.0, m, z]).collect())
}

/// Per-row state kept across boosting iterations: the running sum of tree
/// outputs for each of the `3K` ensembles, in the order they were appended.
struct RowSums(Vec<Vec<f64>>);

impl RowSums {
    fn natural(&self, i: usize, ensembles: &[TreeEnsemble], k: usize) -> NaturalParams {
        let v = |slot: usize| -> Vec<f64> {
            (slot * k..(slot + 1) * k)
                .map(|e| ensembles[e].base_value + ensembles[e].learning_rate * self.0[e][i])
                .collect()
        };
        NaturalParams {
            alpha: v(0),
            mu: v(1),
            z: v(2),
        }
    }
}

/// Trains with explicit training and validation rows. The two sets must be
/// disjoint and non-empty.
pub fn train_with_split(
    data: &DistributionalDataset,
    cfg: &ScgmmConfig,
    train_rows: &[usize],
    valid_rows: &[usize],
) -> Result<ScgmmModel> {
    cfg.validate()?;
    let n = data.n();
    let p = data.p();
    let k = cfg.k;
    if p == 0 {
        return Err(WdlError::invalid("at least one covariate is required"));
    }
    if train_rows.is_empty() || valid_rows.is_empty() {
        return Err(WdlError::invalid("training and validation sets must be non-empty"));
    }
    let mut seen = vec![false; n];
    for &i in train_rows.iter().chain(valid_rows) {
        if i >= n || seen[i] {
            return Err(WdlError::invalid("split indices must be distinct rows of the dataset"));
        }
        seen[i] = true;
    }
    if let Some(i) = data.outcomes.iter().position(|g| g.distinct_support() < 2) {
        return Err(WdlError::invalid(format!(
            "outcome {i} is degenerate (single support point)"
        )));
    }
    let mut tree_params = cfg.tree;
    let leaf_cap = (train_rows.len() / 2).max(1);
    if tree_params.min_samples_leaf > leaf_cap {
        debug!(
            "min_samples_leaf {} lowered to {leaf_cap} for {} training rows",
            tree_params.min_samples_leaf,
            train_rows.len()
        );
        tree_params.min_samples_leaf = leaf_cap;
    }
    let grid = &cfg.grid;
    let mm_cfg = MmConfig {
        pi_update: cfg.pi_update,
        ..MmConfig::default()
    };
    let observed = data.quantiles(grid);
    let x_train = data.x.select(Axis(0), train_rows);

    let mut ensembles = Vec::with_capacity(3 * k);
    let bases = initial_bases(data, train_rows, cfg)?;
    for slot in 0..3 {
        for b in &bases {
            ensembles.push(TreeEnsemble::new(b[slot], cfg.learning_rate)?);
        }
    }
    let mut sums = RowSums(vec![vec![0.0; n]; 3 * k]);

    let mean_loss = |rows: &[usize], sums: &RowSums, ens: &[TreeEnsemble], iter: usize| -> Result<f64> {
        let losses = rows
            .par_iter()
            .map(|&i| {
                let theta = link(&sums.natural(i, ens, k))?;
                w2_squared(&observed[i], &gmm_quantile_function(&theta, grid)?)
            })
            .collect::<Result<Vec<f64>>>()?;
        let m = losses.iter().sum::<f64>() / rows.len() as f64;
        if !m.is_finite() {
            return Err(WdlError::numerical(iter, "non-finite loss"));
        }
        Ok(m)
    };

    let mut trace = vec![TraceRecord {
        iteration: 0,
        train_loss: mean_loss(train_rows, &sums, &ensembles, 0)?,
        valid_loss: mean_loss(valid_rows, &sums, &ensembles, 0)?,
    }];
    let mut best = (0usize, trace[0].valid_loss);
    let mut stale = 0usize;

    for iter in 1..=cfg.max_boost_iters {
        // Step 1: per-sample component refits against the current split.
        let step1 = train_rows
            .par_iter()
            .map(|&i| {
                let theta = link(&sums.natural(i, &ensembles, k))?;
                let nu = decompose(&data.outcomes[i], &theta)?;
                let refit = update_components(&nu, &theta, grid)?;
                Ok(unlink(&refit))
            })
            .collect::<Result<Vec<NaturalParams>>>()?;
        for (slot, pick) in [(1usize, 0usize), (2, 1)] {
            for c in 0..k {
                let e = slot * k + c;
                let targets: Vec<f64> = step1
                    .iter()
                    .zip(train_rows)
                    .map(|(t, &i)| {
                        let target = if pick == 0 { t.mu[c] } else { t.z[c] };
                        target - (ensembles[e].base_value + ensembles[e].learning_rate * sums.0[e][i])
                    })
                    .collect();
                append_tree(
                    &mut ensembles[e],
                    &mut sums.0[e],
                    &x_train,
                    &targets,
                    data,
                    &tree_params,
                    iter,
                )?;
            }
        }

        // Step 2: per-sample weight update on the refitted components.
        let step2 = train_rows
            .par_iter()
            .map(|&i| {
                let theta = link(&sums.natural(i, &ensembles, k))?;
                let w = update_sample_weights(&data.outcomes[i], &theta, &mm_cfg, grid)?;
                Ok(unlink(&theta.with_weights(&w)?).alpha)
            })
            .collect::<Result<Vec<Vec<f64>>>>()?;
        let alpha_now: Vec<Vec<f64>> = train_rows
            .iter()
            .map(|&i| {
                let a = sums.natural(i, &ensembles, k).alpha;
                let center = a.iter().sum::<f64>() / k as f64;
                a.iter().map(|v| v - center).collect()
            })
            .collect();
        for c in 0..k {
            let targets: Vec<f64> = step2.iter().zip(&alpha_now).map(|(t, now)| t[c] - now[c]).collect();
            append_tree(
                &mut ensembles[c],
                &mut sums.0[c],
                &x_train,
                &targets,
                data,
                &tree_params,
                iter,
            )?;
        }

        let record = TraceRecord {
            iteration: iter,
            train_loss: mean_loss(train_rows, &sums, &ensembles, iter)?,
            valid_loss: mean_loss(valid_rows, &sums, &ensembles, iter)?,
        };
        debug!(
            "iteration {iter}: train {} valid {}",
            record.train_loss, record.valid_loss
        );
        trace.push(record);
        if record.valid_loss < best.1 {
            best = (iter, record.valid_loss);
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.early_stop_patience {
                info!("early stop at iteration {iter}; best iteration {}", best.0);
                break;
            }
        }
    }

    for e in &mut ensembles {
        e.truncate(best.0);
    }
    let mut model = ScgmmModel {
        config: cfg.clone(),
        n_features: p,
        ensembles,
        trace,
        best_iteration: best.0,
        final_loss: f64::NAN,
    };
    let mut used: Vec<usize> = train_rows.iter().chain(valid_rows).copied().collect();
    used.sort_unstable();
    let losses = used
        .par_iter()
        .map(|&i| {
            let row = data.x.row(i).to_vec();
            w2_squared(&observed[i], &predict_quantiles(&model, &row, grid)?)
        })
        .collect::<Result<Vec<f64>>>()?;
    model.final_loss = losses.iter().sum::<f64>() / losses.len() as f64;
    Ok(model)
}

/// Fits a tree to `targets` (one per training row), appends it, and adds its
/// output to the running sums of every row in the dataset.
fn append_tree(
    ens: &mut TreeEnsemble,
    sums: &mut [f64],
    x_train: &Array2<f64>,
    targets: &[f64],
    data: &DistributionalDataset,
    params: &TreeParams,
    iter: usize,
) -> Result<()> {
    if targets.iter().any(|t| !t.is_finite()) {
        return Err(WdlError::numerical(iter, "non-finite boosting residual"));
    }
    let tree = fit_tree(x_train.view(), targets, params)?;
    for (i, row) in data.x.rows().into_iter().enumerate() {
        sums[i] += crate::trees::predict_tree(&tree, row.as_slice().expect("standard layout"))?;
    }
    ens.push(tree);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::normal_quantile_function;
    use approx::assert_abs_diff_eq;

    #[test]
    fn link_basics() {
        let nat = NaturalParams {
            alpha: vec![0.0, 0.0, 0.0],
            mu: vec![1.0, -1.0, 0.0],
            z: vec![0.0, 1.0, 0.0],
        };
        let t = link(&nat).unwrap();
        for w in t.weights() {
            assert_abs_diff_eq!(w, 1.0 / 3.0, epsilon = 1e-15);
        }
        assert_eq!(t.means(), vec![-1.0, 0.0, 1.0]);
        assert_abs_diff_eq!(t.sds()[0], std::f64::consts::E, epsilon = 1e-15);
        assert_eq!(t.sds()[2], 1.0);
        // Huge logits do not overflow.
        let big = NaturalParams {
            alpha: vec![800.0, 0.0],
            mu: vec![0.0, 1.0],
            z: vec![-50.0, 50.0],
        };
        let t = link(&big).unwrap();
        assert_abs_diff_eq!(t.weights()[0], 1.0, epsilon = 1e-15);
        assert_eq!(t.sds(), vec![1e-6, 1e6]);
        assert!(link(&NaturalParams {
            alpha: vec![f64::NAN],
            mu: vec![0.0],
            z: vec![0.0]
        })
        .is_err());
    }

    #[test]
    fn unlink_basics_and_round_trip() {
        let t = GaussianMixtureParams::from_parts(&[0.5, 0.5], &[0.0, 1.0], &[1.0, std::f64::consts::E]).unwrap();
        let nat = unlink(&t);
        assert_eq!(nat.alpha, vec![0.0, 0.0]);
        assert_abs_diff_eq!(nat.z[1], 1.0, epsilon = 1e-15);
        let t = GaussianMixtureParams::from_parts(&[0.2, 0.3, 0.5], &[-1.0, 2.0, 0.5], &[0.3, 1.5, 2.0]).unwrap();
        let back = link(&unlink(&t)).unwrap();
        for (a, b) in t.components().iter().zip(back.components()) {
            assert_abs_diff_eq!(a.weight, b.weight, epsilon = 1e-10);
            assert_abs_diff_eq!(a.mean, b.mean, epsilon = 1e-10);
            assert_abs_diff_eq!(a.sd, b.sd, epsilon = 1e-10);
        }
        let nat = unlink(&t);
        assert_abs_diff_eq!(nat.alpha.iter().sum::<f64>(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn quantile_outcomes_reproduce_their_grid() {
        let grid = LevelGrid::default();
        let q = normal_quantile_function(1.0, 2.0, &grid).unwrap();
        let x = Array2::zeros((1, 1));
        let d = DistributionalDataset::from_quantiles(x, std::slice::from_ref(&q)).unwrap();
        assert_eq!(d.quantiles(&grid)[0], q);
    }

    #[test]
    fn split_is_seeded_and_disjoint() {
        let (a, b) = validation_split(50, 0.2, 3);
        assert_eq!((a.len(), b.len()), (40, 10));
        assert_eq!(validation_split(50, 0.2, 3), (a.clone(), b.clone()));
        let mut all: Vec<usize> = a.into_iter().chain(b).collect();
        all.sort_unstable();
        assert_eq!(all, (0..50).collect::<Vec<_>>());
    }

    fn two_group_data() -> DistributionalDataset {
        let grid = LevelGrid::default();
        let n = 40;
        let x = Array2::from_shape_fn((n, 1), |(i, _)| if i % 2 == 0 { -1.0 } else { 1.0 });
        let q: Vec<QuantileFunction> = (0..n)
            .map(|i| normal_quantile_function(x[[i, 0]], 1.0, &grid).unwrap())
            .collect();
        DistributionalDataset::from_quantiles(x, &q).unwrap()
    }

    #[test]
    fn single_component_two_groups() {
        let data = two_group_data();
        let cfg = ScgmmConfig {
            k: 1,
            learning_rate: 0.3,
            max_boost_iters: 60,
            tree: TreeParams {
                max_depth: 1,
                min_samples_leaf: 2,
                min_split_improvement: 0.0,
            },
            ..ScgmmConfig::default()
        };
        let model = train(&data, &cfg).unwrap();
        // Per-group oracle: location-scale fit of N(x, 1) quantiles against
        // standard normal quantiles is exactly (x, 1).
        for x in [-1.0, 1.0] {
            let t = predict_params(&model, &[x]).unwrap();
            assert_abs_diff_eq!(t.means()[0], x, epsilon = 0.1);
            assert_abs_diff_eq!(t.sds()[0], 1.0, epsilon = 0.1);
        }
    }

    #[test]
    fn best_iteration_has_lowest_validation_loss() {
        let data = two_group_data();
        let cfg = ScgmmConfig {
            k: 2,
            max_boost_iters: 15,
            tree: TreeParams {
                max_depth: 2,
                min_samples_leaf: 3,
                min_split_improvement: 0.0,
            },
            ..ScgmmConfig::default()
        };
        let model = train(&data, &cfg).unwrap();
        let best = model.trace()[model.best_iteration()].valid_loss;
        assert!(model.trace().iter().all(|r| best <= r.valid_loss));
        assert!(model.ensembles().iter().all(|e| e.len() == model.best_iteration()));
        assert!(model.final_loss().is_finite());
    }

    #[test]
    fn serialization_round_trip_and_errors() {
        let data = two_group_data();
        let cfg = ScgmmConfig {
            k: 2,
            max_boost_iters: 5,
            tree: TreeParams {
                max_depth: 2,
                min_samples_leaf: 3,
                min_split_improvement: 0.0,
            },
            ..ScgmmConfig::default()
        };
        let model = train(&data, &cfg).unwrap();
        let bytes = model.serialize().unwrap();
        let back = ScgmmModel::deserialize(&bytes).unwrap();
        assert_eq!(back, model);
        for x in [-1.0, 0.3, 1.0] {
            assert_eq!(
                predict_params(&back, &[x]).unwrap(),
                predict_params(&model, &[x]).unwrap()
            );
        }
        let text = String::from_utf8(bytes).unwrap();
        let bumped = text.replacen("\"schema_version\": 1", "\"schema_version\": 2", 1);
        assert!(matches!(
            ScgmmModel::deserialize(bumped.as_bytes()),
            Err(WdlError::Decode(_))
        ));
        let mut corrupt = text.into_bytes();
        corrupt[10] = b'{';
        assert!(matches!(ScgmmModel::deserialize(&corrupt), Err(WdlError::Decode(_))));
    }

    #[test]
    fn train_rejects_bad_inputs() {
        let data = two_group_data();
        let small = data.subset(&(0..10).collect::<Vec<_>>());
        assert!(train(&small, &ScgmmConfig::default()).is_err());
        let cfg = ScgmmConfig {
            k: 0,
            ..ScgmmConfig::default()
        };
        assert!(train(&data, &cfg).is_err());
    }
}
