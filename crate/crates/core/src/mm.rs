//! Minimum-Wasserstein Gaussian mixture fitting by majorization-minimization.
//!
//! For a sample `g` and mixture `theta`, the loss is
//! `L(theta) = W2^2(g, f_theta)`. Splitting `g` into per-component measures
//! `g_k` that share the mixture weights gives the upper bound
//! `R(nu, theta) = sum_k pi_k W2^2(g_k, f_k)`, which touches `L` when the
//! split is the transport-aligned decomposition computed by [`decompose`].
//! Each MM iteration refits the components against their `g_k` (a
//! location-scale regression in quantile space), updates the weights, and
//! recomputes the decomposition.

use log::debug;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::{
    empirical_quantiles, gmm_cdf, gmm_quantile, gmm_quantile_function, normal_cdf, normal_quantile,
    normal_quantile_function, transport_cuts, w2_squared, w2_squared_exact, Component, EmpiricalDistribution,
    GaussianMixtureParams, LevelGrid, MixtureDecomposition, QuantileFunction, SD_FLOOR,
};
use crate::error::{Result, WdlError};

/// Strategy for the mixture-weight step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PiUpdate {
    /// EM-style responsibilities evaluated at the sample points.
    #[default]
    EmApprox,
    /// Projected gradient descent on the weight simplex.
    ProjectedGradient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmConfig {
    pub max_iters: usize,
    /// Stop once the relative loss decrease falls below this.
    pub rel_tol: f64,
    pub pi_update: PiUpdate,
    /// Initial step of the projected gradient weight update.
    pub gradient_step: f64,
    pub gradient_iters: usize,
    /// Extra randomly perturbed starts; zero keeps the run deterministic in
    /// the data alone.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for MmConfig {
    fn default() -> Self {
        MmConfig {
            max_iters: 200,
            rel_tol: 1e-6,
            pi_update: PiUpdate::EmApprox,
            gradient_step: 1.0,
            gradient_iters: 20,
            restarts: 0,
            seed: 0,
        }
    }
}

impl MmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(WdlError::invalid("max_iters must be at least 1"));
        }
        if !(self.rel_tol > 0.0) {
            return Err(WdlError::invalid("rel_tol must be positive"));
        }
        if !(self.gradient_step > 0.0) {
            return Err(WdlError::invalid("gradient_step must be positive"));
        }
        if self.gradient_iters == 0 {
            return Err(WdlError::invalid("gradient_iters must be at least 1"));
        }
        Ok(())
    }
}

/// Loss and surrogate at one accepted iterate. `loss` and `surrogate` are
/// evaluated on the level grid; the `exact_` fields integrate the same
/// quantities in closed form and satisfy `exact_surrogate == exact_loss` up
/// to rounding, since the decomposition follows the optimal transport.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MmRecord {
    pub iteration: usize,
    pub loss: f64,
    pub surrogate: f64,
    pub exact_loss: f64,
    pub exact_surrogate: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MmTrace {
    pub records: Vec<MmRecord>,
    pub converged: bool,
}

impl MmTrace {
    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.records.last().map(|r| r.loss)
    }
}

/// Location and scale minimizing `W2^2` between `target` and the
/// location-scale family generated by `base`: ordinary least squares of the
/// target quantiles on the base quantiles over the grid.
pub fn fit_location_scale(target: &QuantileFunction, base: &QuantileFunction) -> Result<(f64, f64)> {
    if target.grid() != base.grid() {
        return Err(WdlError::invalid("target and base quantiles live on different grids"));
    }
    let m = base.values().len() as f64;
    let mean_b = base.values().iter().sum::<f64>() / m;
    let mean_t = target.values().iter().sum::<f64>() / m;
    let mut cov = 0.0;
    let mut var = 0.0;
    for (b, t) in base.values().iter().zip(target.values()) {
        cov += (b - mean_b) * (t - mean_t);
        var += (b - mean_b) * (b - mean_b);
    }
    if var <= 0.0 {
        return Err(WdlError::DegenerateBase);
    }
    let sigma = (cov / var).max(SD_FLOOR);
    let mu = mean_t - sigma * mean_b;
    Ok((mu, sigma))
}

fn log_normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

/// Posterior component probabilities `pi_k f_k(x) / sum_j pi_j f_j(x)`,
/// computed in log space. Falls back to uniform when nothing is finite.
pub(crate) fn responsibilities_at(theta: &GaussianMixtureParams, x: f64, out: &mut [f64]) {
    let mut max = f64::NEG_INFINITY;
    for (o, c) in out.iter_mut().zip(theta.components()) {
        *o = if c.weight > 0.0 {
            c.weight.ln() + log_normal_pdf(x, c.mean, c.sd)
        } else {
            f64::NEG_INFINITY
        };
        max = max.max(*o);
    }
    if !max.is_finite() {
        debug!("all component densities vanish at {x}; using uniform responsibilities");
        let u = 1.0 / out.len() as f64;
        out.iter_mut().for_each(|o| *o = u);
        return;
    }
    let mut total = 0.0;
    for o in out.iter_mut() {
        *o = (*o - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

/// Transport-aligned decomposition of `g` under `theta`.
///
/// The monotone transport from `g` to `f_theta` sends the atom `x_i` with
/// cumulative weights `(c_{i-1}, c_i]` onto the interval
/// `[F^{-1}(c_{i-1}), F^{-1}(c_i)]`. Its responsibilities are the shares of
/// that interval's mass held by each component,
/// `pi_k (F_k(b_i) - F_k(a_i)) / (F(b_i) - F(a_i))`. The component masses
/// then telescope to exactly `pi_k`, so `g = sum_k pi_k g_k` holds and the
/// surrogate is a true upper bound. Atoms whose interval is numerically
/// empty fall back to the point rule of [`decompose_midpoint`].
pub fn decompose(g: &EmpiricalDistribution, theta: &GaussianMixtureParams) -> Result<MixtureDecomposition> {
    let k = theta.k();
    let n = g.len();
    let comps = theta.components();
    let cuts = transport_cuts(g, theta)?;
    let mids = g.midpoint_cdf();
    // Per component, (F_k, 1 - F_k) at every cut from one tail evaluation.
    let sides: Vec<Vec<(f64, f64)>> = comps
        .iter()
        .map(|c| {
            cuts.iter()
                .map(|&t| {
                    let z = (t - c.mean) / c.sd;
                    let tail = normal_cdf(-z.abs());
                    if z < 0.0 {
                        (tail, 1.0 - tail)
                    } else {
                        (1.0 - tail, tail)
                    }
                })
                .collect()
        })
        .collect();
    let mut resp = vec![0.0; n * k];
    for i in 0..n {
        let row = &mut resp[i * k..(i + 1) * k];
        let mut total = 0.0;
        for ((r, c), side) in row.iter_mut().zip(comps).zip(&sides) {
            let (za, zb) = ((cuts[i] - c.mean) / c.sd, (cuts[i + 1] - c.mean) / c.sd);
            // Difference taken on the side where both values are tails.
            let mass = if za + zb > 0.0 {
                side[i].1 - side[i + 1].1
            } else {
                side[i + 1].0 - side[i].0
            };
            *r = c.weight * mass.max(0.0);
            total += *r;
        }
        if total > 0.0 && total.is_finite() {
            row.iter_mut().for_each(|r| *r /= total);
        } else {
            let t = gmm_quantile(theta, mids[i].clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON))?;
            responsibilities_at(theta, t, row);
        }
    }
    MixtureDecomposition::new(g.clone(), resp, theta.weights())
}

/// Point-evaluated decomposition: each atom `x` is mapped to
/// `t = F_theta^{-1}(G(x))`, with `G` the midpoint empirical cdf
/// `(rank - 0.5) / n`, and split in proportion to `pi_k f_k(t)`.
///
/// This converges to [`decompose`] as atoms get dense, but its component
/// masses only approximate `pi_k`.
pub fn decompose_midpoint(g: &EmpiricalDistribution, theta: &GaussianMixtureParams) -> Result<MixtureDecomposition> {
    let k = theta.k();
    let levels = g.midpoint_cdf();
    let mut resp = vec![0.0; g.len() * k];
    for (i, &s) in levels.iter().enumerate() {
        let t = gmm_quantile(theta, s.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON))?;
        responsibilities_at(theta, t, &mut resp[i * k..(i + 1) * k]);
    }
    MixtureDecomposition::new(g.clone(), resp, theta.weights())
}

/// `R(nu, theta) = sum_k pi_k W2^2(g_k, N(mu_k, sd_k^2))` on `grid`.
///
/// A component of `nu` with no mass contributes nothing.
pub fn surrogate_loss(nu: &MixtureDecomposition, theta: &GaussianMixtureParams, grid: &LevelGrid) -> Result<f64> {
    if nu.k() != theta.k() {
        return Err(WdlError::invalid("decomposition and mixture differ in component count"));
    }
    let mut total = 0.0;
    for (k, c) in theta.components().iter().enumerate() {
        let Some(gk) = nu.component(k) else {
            debug!("component {k} of the decomposition is empty");
            continue;
        };
        let qk = empirical_quantiles(&gk, grid);
        let fk = normal_quantile_function(c.mean, c.sd, grid)?;
        total += c.weight * w2_squared(&qk, &fk)?;
    }
    Ok(total)
}

/// [`surrogate_loss`] with each component distance integrated exactly
/// (see [`w2_squared_exact`]) rather than on a level grid.
pub fn surrogate_loss_exact(nu: &MixtureDecomposition, theta: &GaussianMixtureParams) -> Result<f64> {
    if nu.k() != theta.k() {
        return Err(WdlError::invalid("decomposition and mixture differ in component count"));
    }
    let mut total = 0.0;
    for (k, c) in theta.components().iter().enumerate() {
        if let Some(gk) = nu.component(k) {
            total += c.weight * w2_squared_exact(&gk, &GaussianMixtureParams::single(c.mean, c.sd)?)?;
        }
    }
    Ok(total)
}

/// `L(theta) = W2^2(g, f_theta)` given the precomputed quantiles of `g`.
pub fn mixture_loss(g_quantiles: &QuantileFunction, theta: &GaussianMixtureParams) -> Result<f64> {
    let f = gmm_quantile_function(theta, g_quantiles.grid())?;
    w2_squared(g_quantiles, &f)
}

fn normalize_simplex(mut w: Vec<f64>) -> Vec<f64> {
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    w
}

/// EM-style weight update: average posterior responsibilities of the
/// mixture over the atoms of the decomposition's parent sample.
pub fn update_weights_em(nu: &MixtureDecomposition, theta: &GaussianMixtureParams) -> Vec<f64> {
    em_weights(nu.parent(), theta)
}

fn em_weights(g: &EmpiricalDistribution, theta: &GaussianMixtureParams) -> Vec<f64> {
    let k = theta.k();
    let mut acc = vec![0.0; k];
    let mut r = vec![0.0; k];
    for (&x, &w) in g.points().iter().zip(g.weights()) {
        responsibilities_at(theta, x, &mut r);
        for (a, ri) in acc.iter_mut().zip(&r) {
            *a += w * ri;
        }
    }
    normalize_simplex(acc)
}

/// Euclidean projection onto the probability simplex.
pub fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cum += uj;
        let t = (cum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    let out: Vec<f64> = v.iter().map(|&x| (x - theta).max(0.0)).collect();
    normalize_simplex(out)
}

const GRADIENT_NODES: usize = 512;
const GRADIENT_TAIL_SDS: f64 = 6.0;
const MAX_HALVINGS: usize = 30;

/// Gradient of the loss with respect to the (unconstrained) mixture weights:
/// `dL/dpi_k = 2 * int (G^{-1}(F_theta(t)) - t) F_k(t) dt`, by a trapezoid
/// rule on `[min(mu - 6 sd), max(mu + 6 sd)]`.
pub fn weight_gradient(g: &EmpiricalDistribution, theta: &GaussianMixtureParams) -> Vec<f64> {
    let comps = theta.components();
    let lo = comps
        .iter()
        .map(|c| c.mean - GRADIENT_TAIL_SDS * c.sd)
        .fold(f64::INFINITY, f64::min);
    let hi = comps
        .iter()
        .map(|c| c.mean + GRADIENT_TAIL_SDS * c.sd)
        .fold(f64::NEG_INFINITY, f64::max);
    let h = (hi - lo) / (GRADIENT_NODES - 1) as f64;
    let cum: Vec<f64> = g
        .weights()
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        })
        .collect();
    let points = g.points();
    let inv_g = |s: f64| {
        let idx = cum.partition_point(|&c| c < s - 1e-12);
        points[idx.min(points.len() - 1)]
    };
    let mut grad = vec![0.0; comps.len()];
    for j in 0..GRADIENT_NODES {
        let t = lo + j as f64 * h;
        let weight = if j == 0 || j == GRADIENT_NODES - 1 { 0.5 } else { 1.0 };
        let gap = inv_g(gmm_cdf(theta, t)) - t;
        for (gk, c) in grad.iter_mut().zip(comps) {
            *gk += weight * gap * normal_cdf((t - c.mean) / c.sd);
        }
    }
    grad.iter_mut().for_each(|x| *x *= 2.0 * h);
    grad
}

/// Projected gradient descent on the mixture weights.
///
/// Each iteration starts from `cfg.gradient_step` and halves the step until
/// the grid loss does not increase; the best iterate is returned.
pub fn update_weights_gradient(
    g: &EmpiricalDistribution,
    theta: &GaussianMixtureParams,
    cfg: &MmConfig,
    grid: &LevelGrid,
) -> Result<Vec<f64>> {
    if theta.k() == 1 {
        return Ok(vec![1.0]);
    }
    let gq = empirical_quantiles(g, grid);
    let mut current = theta.clone();
    let mut current_loss = mixture_loss(&gq, &current)?;
    for iter in 0..cfg.gradient_iters {
        let grad = weight_gradient(g, &current);
        if grad.iter().any(|x| !x.is_finite()) {
            return Err(WdlError::numerical(iter, "non-finite weight gradient"));
        }
        let pi = current.weights();
        let mut step = cfg.gradient_step;
        let mut improved = false;
        for _ in 0..MAX_HALVINGS {
            let cand: Vec<f64> = pi.iter().zip(&grad).map(|(p, d)| p - step * d).collect();
            let cand = current.with_weights(&project_to_simplex(&cand))?;
            let loss = mixture_loss(&gq, &cand)?;
            if loss <= current_loss {
                improved = loss < current_loss;
                current = cand;
                current_loss = loss;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Ok(current.weights())
}

/// Location-scale refit of every component against its share of the
/// decomposition. Components whose share has fewer than two distinct
/// supported points keep their previous parameters. Weights are carried
/// from `prev`; the result is re-sorted by mean.
pub fn update_components(
    nu: &MixtureDecomposition,
    prev: &GaussianMixtureParams,
    grid: &LevelGrid,
) -> Result<GaussianMixtureParams> {
    if nu.k() != prev.k() {
        return Err(WdlError::invalid("decomposition and mixture differ in component count"));
    }
    let base = normal_quantile_function(0.0, 1.0, grid)?;
    let mut comps = Vec::with_capacity(prev.k());
    for (k, c) in prev.components().iter().enumerate() {
        let fitted = match nu.component(k) {
            Some(gk) if gk.distinct_support() >= 2 => {
                let (mean, sd) = fit_location_scale(&empirical_quantiles(&gk, grid), &base)?;
                Component {
                    weight: c.weight,
                    mean,
                    sd,
                }
            }
            _ => {
                debug!("component {k} is degenerate; keeping previous parameters");
                *c
            }
        };
        comps.push(fitted);
    }
    GaussianMixtureParams::new(comps)
}

/// One weight step according to `cfg.pi_update`.
pub fn update_weights(
    nu: &MixtureDecomposition,
    theta: &GaussianMixtureParams,
    cfg: &MmConfig,
    grid: &LevelGrid,
) -> Result<Vec<f64>> {
    update_sample_weights(nu.parent(), theta, cfg, grid)
}

/// [`update_weights`] for a decomposition of `g`. Both weight rules depend
/// only on the parent sample, so no decomposition is needed.
pub fn update_sample_weights(
    g: &EmpiricalDistribution,
    theta: &GaussianMixtureParams,
    cfg: &MmConfig,
    grid: &LevelGrid,
) -> Result<Vec<f64>> {
    match cfg.pi_update {
        PiUpdate::EmApprox => Ok(em_weights(g, theta)),
        PiUpdate::ProjectedGradient => update_weights_gradient(g, theta, cfg, grid),
    }
}

/// Equal-mass slicing of the sorted sample: per-slice mean and sd, uniform
/// weights.
pub fn slice_init(g: &EmpiricalDistribution, k: usize) -> Result<GaussianMixtureParams> {
    let overall_sd = g.variance().sqrt();
    let mids = g.midpoint_cdf();
    let mut comps = Vec::with_capacity(k);
    for slice in 0..k {
        let (lo, hi) = (slice as f64 / k as f64, (slice + 1) as f64 / k as f64);
        let mut mass = 0.0;
        let mut sum = 0.0;
        let mut sq = 0.0;
        for ((&p, &w), &m) in g.points().iter().zip(g.weights()).zip(&mids) {
            let inside = m >= lo && (m < hi || slice + 1 == k);
            if inside && w > 0.0 {
                mass += w;
                sum += w * p;
                sq += w * p * p;
            }
        }
        let (mean, sd) = if mass > 0.0 {
            let mean = sum / mass;
            let var = (sq / mass - mean * mean).max(0.0);
            (mean, var.sqrt())
        } else {
            (g.quantile((lo + hi) / 2.0), 0.0)
        };
        let sd = if sd > 0.0 { sd } else { overall_sd / k as f64 };
        comps.push(Component {
            weight: 1.0 / k as f64,
            mean,
            sd: sd.max(SD_FLOOR),
        });
    }
    let mut w = vec![1.0 / k as f64; k];
    w[k - 1] = 1.0 - w[..k - 1].iter().sum::<f64>();
    for (c, wi) in comps.iter_mut().zip(w) {
        c.weight = wi;
    }
    GaussianMixtureParams::new(comps)
}

/// Fits a `k`-component mixture to `g` by the monotone MM loop.
///
/// An iteration refits components, updates weights and recomputes the
/// decomposition. A weight update that would raise the loss is discarded,
/// and an iteration whose loss rises ends the run at the previous iterate,
/// so the recorded loss sequence never increases.
pub fn fit_gmm_mm(
    g: &EmpiricalDistribution,
    k: usize,
    cfg: &MmConfig,
    grid: &LevelGrid,
) -> Result<(GaussianMixtureParams, MmTrace)> {
    cfg.validate()?;
    if k == 0 {
        return Err(WdlError::invalid("number of components must be at least 1"));
    }
    if k > g.distinct_support() {
        return Err(WdlError::invalid(format!(
            "{k} components requested for {} distinct points",
            g.distinct_support()
        )));
    }
    let start = slice_init(g, k)?;
    let mut best = run_mm(g, start.clone(), cfg, grid)?;
    if cfg.restarts > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let spread = g.variance().sqrt();
        for _ in 0..cfg.restarts {
            let comps = start
                .components()
                .iter()
                .map(|c| Component {
                    mean: c.mean + spread * rng.random_range(-0.5..0.5),
                    ..*c
                })
                .collect();
            let run = run_mm(g, GaussianMixtureParams::new(comps)?, cfg, grid)?;
            if run.1.final_loss() < best.1.final_loss() {
                best = run;
            }
        }
    }
    Ok(best)
}

fn run_mm(
    g: &EmpiricalDistribution,
    mut theta: GaussianMixtureParams,
    cfg: &MmConfig,
    grid: &LevelGrid,
) -> Result<(GaussianMixtureParams, MmTrace)> {
    let gq = empirical_quantiles(g, grid);
    let mut nu = decompose(g, &theta)?;
    let mut loss = mixture_loss(&gq, &theta)?;
    let mut trace = MmTrace::default();
    trace.records.push(MmRecord {
        iteration: 0,
        loss,
        surrogate: surrogate_loss(&nu, &theta, grid)?,
        exact_loss: w2_squared_exact(g, &theta)?,
        exact_surrogate: surrogate_loss_exact(&nu, &theta)?,
    });
    for iter in 1..=cfg.max_iters {
        let with_components = update_components(&nu, &theta, grid)?;
        let components_loss = mixture_loss(&gq, &with_components)?;
        let weights = update_weights(&nu, &with_components, cfg, grid)?;
        let candidate = with_components.with_weights(&weights)?;
        let candidate_loss = mixture_loss(&gq, &candidate)?;
        let (next, next_loss) = if candidate_loss <= components_loss {
            (candidate, candidate_loss)
        } else {
            (with_components, components_loss)
        };
        if !next_loss.is_finite() {
            return Err(WdlError::numerical(iter, "non-finite loss"));
        }
        if next_loss > loss {
            trace.converged = true;
            break;
        }
        nu = decompose(g, &next)?;
        let surrogate = surrogate_loss(&nu, &next, grid)?;
        let rel = (loss - next_loss) / loss.max(f64::MIN_POSITIVE);
        theta = next;
        loss = next_loss;
        trace.records.push(MmRecord {
            iteration: iter,
            loss,
            surrogate,
            exact_loss: w2_squared_exact(g, &theta)?,
            exact_surrogate: surrogate_loss_exact(&nu, &theta)?,
        });
        if rel < cfg.rel_tol {
            trace.converged = true;
            break;
        }
    }
    Ok((theta, trace))
}

/// Standard-normal quantiles on `grid`; the base of every component refit.
pub fn standard_normal_quantiles(grid: &LevelGrid) -> QuantileFunction {
    let values = grid.levels().iter().map(|&s| normal_quantile(s)).collect();
    QuantileFunction::new(grid.clone(), values).expect("normal quantiles are monotone")
}
