//! Distribution representations and the one-dimensional 2-Wasserstein metric.
//!
//! Every distribution is compared through its quantile function sampled on a
//! shared [`LevelGrid`]. The squared distance between two quantile functions
//! on an `m`-level grid is `(1/(m+1)) * sum (q1 - q2)^2`, which for the
//! default 99-level grid is the familiar `1/100` Riemann sum.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use statrs::function::erf;

use crate::error::{Result, WdlError};

/// Smallest standard deviation a mixture component may carry.
pub const SD_FLOOR: f64 = 1e-6;

const WEIGHT_SUM_TOL: f64 = 1e-12;
const QUANTILE_CMP_SLACK: f64 = 1e-12;

/// Standard normal cdf.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erf::erfc(-z / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal quantile.
pub fn normal_quantile(s: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erf::erfc_inv(2.0 * s)
}

/// Strictly increasing probability levels inside (0, 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LevelGrid {
    levels: Arc<[f64]>,
}

impl LevelGrid {
    pub fn new(levels: Vec<f64>) -> Result<Self> {
        if levels.is_empty() {
            return Err(WdlError::invalid("level grid is empty"));
        }
        if levels.iter().any(|&s| !(s > 0.0 && s < 1.0)) {
            return Err(WdlError::invalid("levels must lie strictly inside (0, 1)"));
        }
        if levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(WdlError::invalid("levels must be strictly increasing"));
        }
        Ok(LevelGrid { levels: levels.into() })
    }

    /// `m` equally spaced levels `1/(m+1), ..., m/(m+1)`.
    pub fn uniform(m: usize) -> Self {
        assert!(m >= 1, "uniform grid needs at least one level");
        let denom = (m + 1) as f64;
        LevelGrid {
            levels: (1..=m).map(|i| i as f64 / denom).collect(),
        }
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Index of `s` in the grid, matched to within `1e-12`.
    pub fn position(&self, s: f64) -> Option<usize> {
        self.levels.iter().position(|&l| (l - s).abs() <= 1e-12)
    }
}

impl Default for LevelGrid {
    /// `{0.01, 0.02, ..., 0.99}`.
    fn default() -> Self {
        LevelGrid::uniform(99)
    }
}

impl TryFrom<Vec<f64>> for LevelGrid {
    type Error = WdlError;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        LevelGrid::new(v)
    }
}

impl From<LevelGrid> for Vec<f64> {
    fn from(g: LevelGrid) -> Self {
        g.levels.to_vec()
    }
}

/// A monotone vector of quantile values on a [`LevelGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileFunction {
    grid: LevelGrid,
    values: Vec<f64>,
}

impl QuantileFunction {
    pub fn new(grid: LevelGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(WdlError::invalid(format!(
                "quantile vector has {} values for a {}-level grid",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(WdlError::invalid("quantile values must be finite"));
        }
        if values.windows(2).any(|w| w[1] < w[0]) {
            return Err(WdlError::invalid("quantile values must be non-decreasing"));
        }
        Ok(QuantileFunction { grid, values })
    }

    pub fn grid(&self) -> &LevelGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Value at a level that lies on the grid.
    pub fn at(&self, s: f64) -> Option<f64> {
        self.grid.position(s).map(|i| self.values[i])
    }
}

/// Quantile function of `N(mean, sd^2)` on `grid`.
pub fn normal_quantile_function(mean: f64, sd: f64, grid: &LevelGrid) -> Result<QuantileFunction> {
    if !(sd > 0.0) || !mean.is_finite() || !sd.is_finite() {
        return Err(WdlError::invalid(
            "normal quantile function needs finite mean and sd > 0",
        ));
    }
    let values = grid.levels().iter().map(|&s| mean + sd * normal_quantile(s)).collect();
    QuantileFunction::new(grid.clone(), values)
}

/// A (possibly weighted) sample of real draws.
///
/// Points are held sorted ascending (stable on ties), each with a
/// non-negative weight; weights sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl EmpiricalDistribution {
    /// Equally weighted sample.
    pub fn new(points: Vec<f64>) -> Result<Self> {
        let n = points.len();
        let w = if n == 0 { 0.0 } else { 1.0 / n as f64 };
        Self::build(points, vec![w; n])
    }

    /// Weighted sample; weights must be non-negative and sum to one.
    pub fn weighted(points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != points.len() {
            return Err(WdlError::invalid("points and weights differ in length"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(WdlError::invalid(format!("weights sum to {total}, expected 1")));
        }
        Self::build(points, weights)
    }

    /// Weighted sample from non-negative weights of any positive total.
    pub fn from_unnormalized(points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != points.len() {
            return Err(WdlError::invalid("points and weights differ in length"));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(WdlError::invalid("weights have no positive mass"));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Self::build(points, weights)
    }

    fn build(points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(WdlError::invalid(format!(
                "empirical distribution needs at least 2 points, got {}",
                points.len()
            )));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(WdlError::invalid("sample points must be finite"));
        }
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(WdlError::invalid("weights must be finite and non-negative"));
        }
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by(|&a, &b| points[a].total_cmp(&points[b]));
        let points = order.iter().map(|&i| points[i]).collect();
        let weights = order.iter().map(|&i| weights[i]).collect();
        Ok(EmpiricalDistribution { points, weights })
    }

    /// Sorted sample points.
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.points.iter().zip(&self.weights).map(|(p, w)| p * w).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * (p - m) * (p - m))
            .sum()
    }

    /// Number of distinct point values carrying positive weight.
    pub fn distinct_support(&self) -> usize {
        let mut count = 0;
        let mut last = None;
        for (&p, &w) in self.points.iter().zip(&self.weights) {
            if w > 0.0 && last != Some(p) {
                count += 1;
                last = Some(p);
            }
        }
        count
    }

    /// Midpoint cdf at each stored point: mass strictly before the point plus
    /// half its own weight. For equal weights this is `(rank - 0.5) / n`.
    pub fn midpoint_cdf(&self) -> Vec<f64> {
        let mut before = 0.0;
        self.weights
            .iter()
            .map(|&w| {
                let g = before + 0.5 * w;
                before += w;
                g
            })
            .collect()
    }

    /// Left-continuous quantile at a single level in `[0, 1]`.
    pub fn quantile(&self, s: f64) -> f64 {
        let mut cum = 0.0;
        let mut last_positive = self.points[0];
        for (&p, &w) in self.points.iter().zip(&self.weights) {
            if w <= 0.0 {
                continue;
            }
            cum += w;
            last_positive = p;
            if cum >= s - QUANTILE_CMP_SLACK {
                return p;
            }
        }
        last_positive
    }
}

/// Weighted empirical quantiles: at each level the smallest point whose
/// cumulative weight reaches the level.
pub fn empirical_quantiles(dist: &EmpiricalDistribution, grid: &LevelGrid) -> QuantileFunction {
    let mut values = Vec::with_capacity(grid.len());
    let mut idx = 0;
    let mut cum = 0.0;
    let n = dist.points.len();
    // Levels are increasing, so a single forward sweep serves all of them.
    for &s in grid.levels() {
        while idx < n && (dist.weights[idx] <= 0.0 || cum + dist.weights[idx] < s - QUANTILE_CMP_SLACK) {
            cum += dist.weights[idx];
            idx += 1;
        }
        let value = if idx < n {
            dist.points[idx]
        } else {
            // Rounding left the final cumulative weight a hair below `s`.
            dist.points
                .iter()
                .zip(&dist.weights)
                .rev()
                .find(|(_, &w)| w > 0.0)
                .map(|(&p, _)| p)
                .unwrap_or(dist.points[n - 1])
        };
        values.push(value);
    }
    QuantileFunction {
        grid: grid.clone(),
        values,
    }
}

/// Weight, mean and standard deviation of one mixture component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub weight: f64,
    pub mean: f64,
    pub sd: f64,
}

/// Parameters of a univariate Gaussian mixture, components ordered by mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixtureParams {
    components: Vec<Component>,
}

impl GaussianMixtureParams {
    /// Validates weights (non-negative, summing to one), floors standard
    /// deviations at [`SD_FLOOR`] and sorts components by mean.
    pub fn new(mut components: Vec<Component>) -> Result<Self> {
        if components.is_empty() {
            return Err(WdlError::invalid("mixture needs at least one component"));
        }
        for c in &components {
            if !c.weight.is_finite() || c.weight < 0.0 {
                return Err(WdlError::invalid(format!("invalid mixture weight {}", c.weight)));
            }
            if !c.mean.is_finite() {
                return Err(WdlError::invalid("component mean must be finite"));
            }
            if !(c.sd > 0.0) || !c.sd.is_finite() {
                return Err(WdlError::invalid(format!(
                    "component sd must be positive, got {}",
                    c.sd
                )));
            }
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(WdlError::invalid(format!("mixture weights sum to {total}")));
        }
        for c in &mut components {
            c.sd = c.sd.max(SD_FLOOR);
        }
        components.sort_by(|a, b| a.mean.total_cmp(&b.mean));
        Ok(GaussianMixtureParams { components })
    }

    pub fn from_parts(weights: &[f64], means: &[f64], sds: &[f64]) -> Result<Self> {
        if weights.len() != means.len() || means.len() != sds.len() {
            return Err(WdlError::invalid("mixture parameter vectors differ in length"));
        }
        Self::new(
            weights
                .iter()
                .zip(means)
                .zip(sds)
                .map(|((&weight, &mean), &sd)| Component { weight, mean, sd })
                .collect(),
        )
    }

    /// Single Gaussian `N(mean, sd^2)`.
    pub fn single(mean: f64, sd: f64) -> Result<Self> {
        Self::new(vec![Component { weight: 1.0, mean, sd }])
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.weight).collect()
    }

    pub fn means(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.mean).collect()
    }

    pub fn sds(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.sd).collect()
    }

    /// Same components with new weights; `weights` must lie on the simplex.
    pub fn with_weights(&self, weights: &[f64]) -> Result<Self> {
        if weights.len() != self.k() {
            return Err(WdlError::invalid("weight vector length differs from component count"));
        }
        Self::new(
            self.components
                .iter()
                .zip(weights)
                .map(|(c, &weight)| Component { weight, ..*c })
                .collect(),
        )
    }
}

/// Mixture cdf `sum_k pi_k Phi((x - mu_k) / sigma_k)`.
pub fn gmm_cdf(theta: &GaussianMixtureParams, x: f64) -> f64 {
    let v: f64 = theta
        .components
        .iter()
        .map(|c| c.weight * normal_cdf((x - c.mean) / c.sd))
        .sum();
    v.clamp(0.0, 1.0)
}

/// Mixture density.
pub fn gmm_pdf(theta: &GaussianMixtureParams, x: f64) -> f64 {
    theta
        .components
        .iter()
        .map(|c| c.weight * normal_pdf((x - c.mean) / c.sd) / c.sd)
        .sum()
}

fn quantile_bracket(theta: &GaussianMixtureParams) -> (f64, f64) {
    let lo = theta
        .components
        .iter()
        .map(|c| c.mean - 10.0 * c.sd)
        .fold(f64::INFINITY, f64::min);
    let hi = theta
        .components
        .iter()
        .map(|c| c.mean + 10.0 * c.sd)
        .fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Mixture quantile by safeguarded Newton iteration.
///
/// The bracket starts at `[min(mu - 10 sd), max(mu + 10 sd)]` and is widened
/// until it contains `s`. Newton steps that leave the bracket fall back to
/// bisection. Levels above one half are solved on the survival function so
/// the upper tail keeps its relative precision.
pub fn gmm_quantile(theta: &GaussianMixtureParams, s: f64) -> Result<f64> {
    check_level(s)?;
    let (lo, hi) = widened_bracket(theta, s, s);
    Ok(solve_quantile(theta, s, lo, hi, initial_guess(theta, s).clamp(lo, hi)))
}

/// Quantiles at non-decreasing `levels`, each solve starting from the
/// previous root. The result is non-decreasing.
pub fn gmm_quantiles_sorted(theta: &GaussianMixtureParams, levels: &[f64]) -> Result<Vec<f64>> {
    let (Some(&first), Some(&last)) = (levels.first(), levels.last()) else {
        return Ok(Vec::new());
    };
    for &s in levels {
        check_level(s)?;
    }
    if levels.windows(2).any(|w| w[1] < w[0]) {
        return Err(WdlError::invalid("levels must be non-decreasing"));
    }
    let (lo, hi) = widened_bracket(theta, first, last);
    let mut out = Vec::with_capacity(levels.len());
    let mut prev: Option<f64> = None;
    for &s in levels {
        let x = match prev {
            Some(p) => solve_quantile(theta, s, p, hi, p),
            None => solve_quantile(theta, s, lo, hi, initial_guess(theta, s).clamp(lo, hi)),
        };
        let x = prev.map_or(x, |p| x.max(p));
        out.push(x);
        prev = Some(x);
    }
    Ok(out)
}

fn check_level(s: f64) -> Result<()> {
    if !(s > 0.0 && s < 1.0) {
        return Err(WdlError::invalid(format!("quantile level {s} outside (0, 1)")));
    }
    Ok(())
}

fn initial_guess(theta: &GaussianMixtureParams, s: f64) -> f64 {
    let z = normal_quantile(s);
    theta.components.iter().map(|c| c.weight * (c.mean + c.sd * z)).sum()
}

/// `F(x) - s`, or `(1 - s) - S(x)` on the upper half; increasing in `x`.
fn quantile_residual(theta: &GaussianMixtureParams, s: f64, x: f64) -> f64 {
    if s > 0.5 {
        let surv: f64 = theta
            .components
            .iter()
            .map(|c| c.weight * normal_cdf(-(x - c.mean) / c.sd))
            .sum();
        (1.0 - s) - surv
    } else {
        gmm_cdf(theta, x) - s
    }
}

/// Bracket containing the quantiles at both `s_lo` and `s_hi`.
fn widened_bracket(theta: &GaussianMixtureParams, s_lo: f64, s_hi: f64) -> (f64, f64) {
    let (mut lo, mut hi) = quantile_bracket(theta);
    let span = (hi - lo).max(1.0);
    let mut widen = span;
    while quantile_residual(theta, s_lo, lo) > 0.0 {
        lo -= widen;
        widen *= 2.0;
    }
    widen = span;
    while quantile_residual(theta, s_hi, hi) < 0.0 {
        hi += widen;
        widen *= 2.0;
    }
    (lo, hi)
}

/// Safeguarded Newton iteration on a bracket known to contain the root.
fn solve_quantile(theta: &GaussianMixtureParams, s: f64, mut lo: f64, mut hi: f64, mut x: f64) -> f64 {
    for _ in 0..200 {
        let v = quantile_residual(theta, s, x);
        if v == 0.0 {
            return x;
        }
        if v < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let scale = hi.abs().max(lo.abs()).max(1.0);
        if hi - lo <= 4.0 * f64::EPSILON * scale {
            break;
        }
        let d = gmm_pdf(theta, x);
        let newton = x - v / d;
        if d > 0.0 && newton > lo && newton < hi {
            // Quadratic convergence: once the step is this small the next
            // error is far below rounding.
            if (newton - x).abs() <= 1e-9 * scale {
                return newton;
            }
            x = newton;
            continue;
        }
        let next = 0.5 * (lo + hi);
        if (next - x).abs() <= 2.0 * f64::EPSILON * scale {
            return next;
        }
        x = next;
    }
    x
}

/// [`gmm_quantile`] at every level of `grid`.
pub fn gmm_quantile_function(theta: &GaussianMixtureParams, grid: &LevelGrid) -> Result<QuantileFunction> {
    QuantileFunction::new(grid.clone(), gmm_quantiles_sorted(theta, grid.levels())?)
}

/// Squared 2-Wasserstein distance approximated on the shared grid:
/// `(1/(m+1)) * sum_l (q1[l] - q2[l])^2`.
pub fn w2_squared(q1: &QuantileFunction, q2: &QuantileFunction) -> Result<f64> {
    if q1.grid != q2.grid {
        return Err(WdlError::invalid("quantile functions live on different grids"));
    }
    let sum: f64 = q1.values.iter().zip(&q2.values).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sum / (q1.grid.len() + 1) as f64)
}

/// Closed-form 2-Wasserstein distance between two Gaussians.
pub fn gaussian_w2(mean1: f64, sd1: f64, mean2: f64, sd2: f64) -> Result<f64> {
    if !(sd1 > 0.0) || !(sd2 > 0.0) {
        return Err(WdlError::invalid("standard deviations must be positive"));
    }
    Ok(((mean1 - mean2).powi(2) + (sd1 - sd2).powi(2)).sqrt())
}

/// Cut points of the monotone transport from `g` to `theta`: `cuts[i]` and
/// `cuts[i + 1]` bound the interval that atom `i` is sent to. The outer
/// cuts are infinite.
pub(crate) fn transport_cuts(g: &EmpiricalDistribution, theta: &GaussianMixtureParams) -> Result<Vec<f64>> {
    let n = g.len();
    let mut levels = Vec::with_capacity(n - 1);
    let mut cum = 0.0;
    for &w in &g.weights[..n - 1] {
        cum += w;
        levels.push(cum.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON));
    }
    let mut cuts = Vec::with_capacity(n + 1);
    cuts.push(f64::NEG_INFINITY);
    cuts.extend(gmm_quantiles_sorted(theta, &levels)?);
    cuts.push(f64::INFINITY);
    Ok(cuts)
}

/// Mass `N(mean, sd^2)` assigns to `[a, b]`, computed on the side of the
/// mean where the cdf difference keeps its precision.
pub fn normal_interval_mass(a: f64, b: f64, mean: f64, sd: f64) -> f64 {
    let za = (a - mean) / sd;
    let zb = (b - mean) / sd;
    let m = if za + zb > 0.0 {
        normal_cdf(-za) - normal_cdf(-zb)
    } else {
        normal_cdf(zb) - normal_cdf(za)
    };
    m.max(0.0)
}

/// `int_a^b (x - t)^2 dN(mean, sd^2)(t)` in closed form.
fn transport_piece_cost(x: f64, a: f64, b: f64, mean: f64, sd: f64) -> f64 {
    let za = (a - mean) / sd;
    let zb = (b - mean) / sd;
    let p = normal_interval_mass(a, b, mean, sd);
    let (pa, pb) = (normal_pdf(za), normal_pdf(zb));
    let za_pa = if za.is_finite() { za * pa } else { 0.0 };
    let zb_pb = if zb.is_finite() { zb * pb } else { 0.0 };
    let m1 = pa - pb;
    let m2 = p + za_pa - zb_pb;
    let d = x - mean;
    (d * d * p - 2.0 * d * sd * m1 + sd * sd * m2).max(0.0)
}

/// Exact squared 2-Wasserstein distance between a weighted sample and a
/// Gaussian mixture, integrating the monotone transport piecewise instead of
/// sampling it on a level grid.
pub fn w2_squared_exact(g: &EmpiricalDistribution, theta: &GaussianMixtureParams) -> Result<f64> {
    let cuts = transport_cuts(g, theta)?;
    let mut total = 0.0;
    for (i, &x) in g.points.iter().enumerate() {
        if g.weights[i] <= 0.0 {
            continue;
        }
        let (a, b) = (cuts[i], cuts[i + 1]);
        for c in theta.components() {
            total += c.weight * transport_piece_cost(x, a, b, c.mean, c.sd);
        }
    }
    Ok(total)
}

/// A split of an empirical distribution into `K` reweighted copies.
///
/// Component `k` shares the parent's points with per-point weight
/// proportional to `w(x) r_k(x)`, where the responsibilities `r_k(x)` sum to
/// one at every point.
#[derive(Debug, Clone)]
pub struct MixtureDecomposition {
    parent: EmpiricalDistribution,
    /// Row-major `n x K`.
    responsibilities: Vec<f64>,
    weights: Vec<f64>,
}

impl MixtureDecomposition {
    pub fn new(parent: EmpiricalDistribution, responsibilities: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let k = weights.len();
        if k == 0 || responsibilities.len() != parent.len() * k {
            return Err(WdlError::invalid("responsibility matrix has the wrong shape"));
        }
        for row in responsibilities.chunks(k) {
            if row.iter().any(|&r| !(r >= 0.0)) {
                return Err(WdlError::invalid("responsibilities must be non-negative"));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > 1e-10 {
                return Err(WdlError::invalid(format!("responsibilities sum to {total}")));
            }
        }
        Ok(MixtureDecomposition {
            parent,
            responsibilities,
            weights,
        })
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn parent(&self) -> &EmpiricalDistribution {
        &self.parent
    }

    /// Component weights `pi_k` the decomposition was built for.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn responsibilities(&self, point: usize) -> &[f64] {
        let k = self.k();
        &self.responsibilities[point * k..(point + 1) * k]
    }

    /// Unnormalized mass `sum_x w(x) r_k(x)` of component `k`.
    pub fn component_mass(&self, k: usize) -> f64 {
        self.parent
            .weights()
            .iter()
            .enumerate()
            .map(|(i, w)| w * self.responsibilities[i * self.k() + k])
            .sum()
    }

    /// The reweighted measure `g_k`, or `None` when it carries no mass.
    pub fn component(&self, k: usize) -> Option<EmpiricalDistribution> {
        let kk = self.k();
        let weights: Vec<f64> = self
            .parent
            .weights()
            .iter()
            .enumerate()
            .map(|(i, w)| w * self.responsibilities[i * kk + k])
            .collect();
        EmpiricalDistribution::from_unnormalized(self.parent.points().to_vec(), weights).ok()
    }
}
