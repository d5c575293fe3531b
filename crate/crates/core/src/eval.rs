//! Prediction loss, an R²-style score, and partial-dependence outputs.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::distributions::{gmm_quantile, w2_squared, GaussianMixtureParams, QuantileFunction};
use crate::error::{Result, WdlError};
use crate::scgmm::{predict_params, ScgmmModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// `W_i^2` per observation.
    pub per_sample: Vec<f64>,
    pub mean_loss: f64,
    pub r_squared: f64,
    /// Mean squared distance of the observations to their pointwise mean
    /// quantile function.
    pub variance: f64,
}

/// Pointwise mean of quantile functions on a shared grid.
pub fn mean_quantile_function(qs: &[QuantileFunction]) -> Result<QuantileFunction> {
    let first = qs.first().ok_or_else(|| WdlError::invalid("no quantile functions"))?;
    let mut acc = vec![0.0; first.values().len()];
    for q in qs {
        if q.grid() != first.grid() {
            return Err(WdlError::invalid("quantile functions live on different grids"));
        }
        acc.iter_mut().zip(q.values()).for_each(|(a, v)| *a += v);
    }
    let n = qs.len() as f64;
    QuantileFunction::new(first.grid().clone(), acc.into_iter().map(|a| a / n).collect())
}

/// Per-pair squared distances, their mean, and `R^2 = 1 - mean / Var`.
///
/// When every observation is identical `Var` is zero and
/// [`WdlError::UndefinedRSquared`] is returned with the mean loss.
pub fn prediction_loss(observed: &[QuantileFunction], predicted: &[QuantileFunction]) -> Result<EvalReport> {
    if observed.len() != predicted.len() {
        return Err(WdlError::invalid(format!(
            "{} observed but {} predicted quantile functions",
            observed.len(),
            predicted.len()
        )));
    }
    let per_sample = observed
        .iter()
        .zip(predicted)
        .map(|(o, p)| w2_squared(o, p))
        .collect::<Result<Vec<_>>>()?;
    let n = observed.len() as f64;
    let mean_loss = per_sample.iter().sum::<f64>() / n;
    let center = mean_quantile_function(observed)?;
    let variance = observed.iter().map(|o| w2_squared(o, &center)).sum::<Result<f64>>()? / n;
    if !(variance > 0.0) {
        return Err(WdlError::UndefinedRSquared { mean_loss });
    }
    Ok(EvalReport {
        per_sample,
        mean_loss,
        r_squared: 1.0 - mean_loss / variance,
        variance,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdpCurve {
    pub feature: usize,
    pub feature_values: Vec<f64>,
    pub rho: f64,
    pub values: Vec<f64>,
}

/// Per-row curves behind a [`PdpCurve`]: `curves[r][j]` is row `r`'s
/// prediction with the feature set to `feature_values[j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IceCurves {
    pub feature: usize,
    pub feature_values: Vec<f64>,
    pub rho: f64,
    pub curves: Vec<Vec<f64>>,
}

/// Averaged component parameters along a feature grid, indexed
/// `[grid point][component]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamCurves {
    pub feature: usize,
    pub feature_values: Vec<f64>,
    pub weights: Vec<Vec<f64>>,
    pub means: Vec<Vec<f64>>,
    pub sds: Vec<Vec<f64>>,
}

fn check_pdp_inputs(model: &ScgmmModel, x: &ArrayView2<f64>, feature: usize, grid: &[f64]) -> Result<()> {
    if x.nrows() == 0 {
        return Err(WdlError::invalid("no covariate rows"));
    }
    if x.ncols() != model.n_features() {
        return Err(WdlError::invalid(format!(
            "covariates have {} columns, model expects {}",
            x.ncols(),
            model.n_features()
        )));
    }
    if feature >= model.n_features() {
        return Err(WdlError::invalid(format!(
            "feature {feature} out of range for {} features",
            model.n_features()
        )));
    }
    if grid.is_empty() || grid.iter().any(|v| !v.is_finite()) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(WdlError::invalid(
            "feature grid must be finite, non-empty and increasing",
        ));
    }
    Ok(())
}

/// Predicted mixtures with `feature` overwritten, indexed `[row][grid]`.
fn overwritten_params(
    model: &ScgmmModel,
    x: &ArrayView2<f64>,
    feature: usize,
    grid: &[f64],
) -> Result<Vec<Vec<GaussianMixtureParams>>> {
    check_pdp_inputs(model, x, feature, grid)?;
    x.rows()
        .into_iter()
        .map(|row| {
            let mut r = row.to_vec();
            grid.iter()
                .map(|&v| {
                    r[feature] = v;
                    predict_params(model, &r)
                })
                .collect()
        })
        .collect()
}

pub fn ice_curves(
    model: &ScgmmModel,
    x: ArrayView2<f64>,
    feature: usize,
    feature_values: &[f64],
    rho: f64,
) -> Result<IceCurves> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(WdlError::invalid(format!("rho {rho} outside (0, 1)")));
    }
    let params = overwritten_params(model, &x, feature, feature_values)?;
    let curves = params
        .iter()
        .map(|row| row.iter().map(|t| gmm_quantile(t, rho)).collect())
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok(IceCurves {
        feature,
        feature_values: feature_values.to_vec(),
        rho,
        curves,
    })
}

/// Average over the rows of `x` of the predicted `rho`-quantile with
/// `feature` set to each grid value.
pub fn functional_pdp(
    model: &ScgmmModel,
    x: ArrayView2<f64>,
    feature: usize,
    feature_values: &[f64],
    rho: f64,
) -> Result<PdpCurve> {
    let ice = ice_curves(model, x, feature, feature_values, rho)?;
    let n = ice.curves.len() as f64;
    let values = (0..feature_values.len())
        .map(|j| ice.curves.iter().map(|c| c[j]).sum::<f64>() / n)
        .collect();
    Ok(PdpCurve {
        feature,
        feature_values: ice.feature_values,
        rho,
        values,
    })
}

/// Row-averaged weights, means and scales of each component as `feature`
/// sweeps its grid.
pub fn marginal_param_curve(
    model: &ScgmmModel,
    x: ArrayView2<f64>,
    feature: usize,
    feature_values: &[f64],
) -> Result<ParamCurves> {
    let params = overwritten_params(model, &x, feature, feature_values)?;
    let k = model.k();
    let n = params.len() as f64;
    let avg = |get: &dyn Fn(&GaussianMixtureParams) -> Vec<f64>| -> Vec<Vec<f64>> {
        (0..feature_values.len())
            .map(|j| {
                let mut acc = vec![0.0; k];
                for row in &params {
                    acc.iter_mut().zip(get(&row[j])).for_each(|(a, v)| *a += v);
                }
                acc.into_iter().map(|a| a / n).collect()
            })
            .collect()
    };
    Ok(ParamCurves {
        feature,
        feature_values: feature_values.to_vec(),
        weights: avg(&|t| t.weights()),
        means: avg(&|t| t.means()),
        sds: avg(&|t| t.sds()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{normal_quantile_function, LevelGrid};
    use approx::assert_abs_diff_eq;

    fn nq(m: f64, s: f64) -> QuantileFunction {
        normal_quantile_function(m, s, &LevelGrid::default()).unwrap()
    }

    #[test]
    fn perfect_prediction() {
        let obs = vec![nq(0.0, 1.0), nq(1.0, 2.0), nq(-1.0, 0.5)];
        let r = prediction_loss(&obs, &obs).unwrap();
        assert_eq!(r.mean_loss, 0.0);
        assert_eq!(r.r_squared, 1.0);
    }

    #[test]
    fn predicting_the_mean_scores_zero() {
        let obs = vec![nq(0.0, 1.0), nq(1.0, 2.0), nq(-1.0, 0.5)];
        let m = mean_quantile_function(&obs).unwrap();
        let r = prediction_loss(&obs, &vec![m; 3]).unwrap();
        assert_abs_diff_eq!(r.r_squared, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn swapped_pair() {
        let obs = vec![nq(0.0, 1.0), nq(2.0, 1.0)];
        let pred = vec![nq(2.0, 1.0), nq(0.0, 1.0)];
        let r = prediction_loss(&obs, &pred).unwrap();
        // Equal scales: grid distances are exactly the squared mean gaps
        // times 99/100, so the ratio is the closed-form 4 / 1.
        assert_abs_diff_eq!(r.r_squared, -3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.mean_loss, 4.0 * 0.99, epsilon = 1e-12);
    }

    #[test]
    fn identical_observations_are_undefined() {
        let obs = vec![nq(0.0, 1.0); 4];
        let pred = vec![nq(0.5, 1.0); 4];
        match prediction_loss(&obs, &pred) {
            Err(WdlError::UndefinedRSquared { mean_loss }) => {
                assert_abs_diff_eq!(mean_loss, 0.25 * 0.99, epsilon = 1e-12)
            }
            other => panic!("{other:?}"),
        }
    }
}
