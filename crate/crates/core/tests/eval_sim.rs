use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use wdl::distributions::{normal_quantile_function, w2_squared, LevelGrid, QuantileFunction};
use wdl::eval::{functional_pdp, ice_curves, marginal_param_curve, mean_quantile_function, prediction_loss};
use wdl::scgmm::{train, ScgmmConfig};
use wdl::sim::{
    densify, draw_mixture_labelled, fold_indices, mixture_truth, simulate, sparsify, Scenario, SimConfig, SparseLevels,
};

fn gaussians() -> impl Strategy<Value = Vec<QuantileFunction>> {
    prop::collection::vec((-5.0..5.0f64, 0.2..3.0f64), 2..12).prop_map(|v| {
        let grid = LevelGrid::uniform(19);
        v.into_iter()
            .map(|(m, s)| normal_quantile_function(m, s, &grid).unwrap())
            .collect()
    })
}

proptest! {
    #[test]
    fn r_squared_never_exceeds_one(obs in gaussians(), shift in -2.0..2.0f64) {
        let pred: Vec<QuantileFunction> = obs
            .iter()
            .map(|q| {
                let v = q.values().iter().map(|x| x + shift).collect();
                QuantileFunction::new(q.grid().clone(), v).unwrap()
            })
            .collect();
        let r = prediction_loss(&obs, &pred).unwrap();
        prop_assert!(r.r_squared <= 1.0);
        prop_assert!((r.mean_loss - shift * shift * 19.0 / 20.0).abs() <= 1e-9);
        prop_assert!((r.r_squared - (1.0 - r.mean_loss / r.variance)).abs() <= 1e-12);
    }

    #[test]
    fn the_mean_function_minimizes_average_distance(obs in gaussians(), bump in 0.01..1.0f64) {
        let center = mean_quantile_function(&obs).unwrap();
        let other = QuantileFunction::new(
            center.grid().clone(),
            center.values().iter().map(|v| v + bump).collect(),
        ).unwrap();
        let avg = |c: &QuantileFunction| obs.iter().map(|q| w2_squared(q, c).unwrap()).sum::<f64>();
        prop_assert!(avg(&center) < avg(&other));
    }

    #[test]
    fn densify_interpolates_through_the_sparse_levels(m in -3.0..3.0f64, s in 0.2..3.0f64) {
        let dense = LevelGrid::default();
        let q = normal_quantile_function(m, s, &dense).unwrap();
        let sparse = sparsify(&q, &SparseLevels::default()).unwrap();
        let back = densify(&sparse, &dense).unwrap();
        prop_assert!(back.values().windows(2).all(|w| w[0] <= w[1]));
        let again = sparsify(&back, &SparseLevels::default()).unwrap();
        prop_assert_eq!(again.values(), sparse.values());
    }

    #[test]
    fn folds_partition_the_rows(n in 5usize..300, folds in 2usize..6, seed in 0u64..1000) {
        prop_assume!(folds <= n);
        let f = fold_indices(n, folds, seed).unwrap();
        let mut all: Vec<usize> = f.iter().flatten().copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        let sizes: Vec<usize> = f.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn truth_weights_follow_the_logistic(x in prop::array::uniform3(-1.0..1.0f64), eps in -0.5..0.5f64) {
        let theta = mixture_truth(&x, eps);
        let w = theta.weights();
        prop_assert!((w[0] - 1.0 / (1.0 + x[2].exp())).abs() <= 1e-12);
        prop_assert!(theta.means()[1] >= 2.0 + eps - 1e-12);
    }
}

#[test]
fn simulation_is_reproducible_and_seed_sensitive() {
    for scenario in [Scenario::Mixture, Scenario::Linear] {
        let cfg = SimConfig {
            n_samples: 30,
            n_points: 50,
            scenario,
            seed: 1,
            ..SimConfig::default()
        };
        let a = simulate(&cfg).unwrap();
        let b = simulate(&cfg).unwrap();
        assert_eq!(a.x(), b.x());
        assert_eq!(a.outcomes(), b.outcomes());
        let c = simulate(&SimConfig { seed: 2, ..cfg }).unwrap();
        assert_ne!(a.x(), c.x());
    }
}

#[test]
fn linear_outcomes_are_gaussian_quantiles() {
    let data = simulate(&SimConfig {
        n_samples: 25,
        scenario: Scenario::Linear,
        seed: 4,
        ..SimConfig::default()
    })
    .unwrap();
    let grid = LevelGrid::default();
    for q in data.quantiles(&grid) {
        // An exact normal quantile function is symmetric about its median.
        let v = q.values();
        let mid = v[49];
        for l in 0..49 {
            assert!(((v[l] + v[98 - l]) / 2.0 - mid).abs() <= 1e-9 * mid.abs().max(1.0));
        }
    }
}

#[test]
fn pdp_is_the_average_of_ice_and_params_are_valid() {
    let data = simulate(&SimConfig {
        n_samples: 50,
        n_points: 100,
        seed: 2,
        ..SimConfig::default()
    })
    .unwrap();
    let model = train(
        &data,
        &ScgmmConfig {
            max_boost_iters: 10,
            ..ScgmmConfig::default()
        },
    )
    .unwrap();
    let xs = [-1.0, -0.3, 0.4, 1.0];
    let ice = ice_curves(&model, data.x().view(), 2, &xs, 0.5).unwrap();
    let pdp = functional_pdp(&model, data.x().view(), 2, &xs, 0.5).unwrap();
    for j in 0..xs.len() {
        let avg = ice.curves.iter().map(|c| c[j]).sum::<f64>() / ice.curves.len() as f64;
        assert!((avg - pdp.values[j]).abs() <= 1e-12);
    }
    let params = marginal_param_curve(&model, data.x().view(), 2, &xs).unwrap();
    for w in &params.weights {
        assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }
    assert!(params.sds.iter().flatten().all(|&s| s > 0.0));
    assert!(functional_pdp(&model, data.x().view(), 2, &xs, 1.0).is_err());
    assert!(functional_pdp(&model, data.x().view(), 3, &xs, 0.5).is_err());
    assert!(functional_pdp(&model, data.x().view(), 0, &[0.5, 0.1], 0.5).is_err());
}

#[test]
fn report_is_invariant_to_joint_shuffles() {
    let grid = LevelGrid::uniform(19);
    let obs: Vec<QuantileFunction> = (0..6)
        .map(|i| normal_quantile_function(i as f64 * 0.7, 1.0 + 0.1 * i as f64, &grid).unwrap())
        .collect();
    let pred: Vec<QuantileFunction> = (0..6)
        .map(|i| normal_quantile_function(i as f64 * 0.6, 1.2, &grid).unwrap())
        .collect();
    let order = [3, 0, 5, 1, 4, 2];
    let so: Vec<_> = order.iter().map(|&i| obs[i].clone()).collect();
    let sp: Vec<_> = order.iter().map(|&i| pred[i].clone()).collect();
    let a = prediction_loss(&obs, &pred).unwrap();
    let b = prediction_loss(&so, &sp).unwrap();
    assert!((a.mean_loss - b.mean_loss).abs() <= 1e-12);
    assert!((a.r_squared - b.r_squared).abs() <= 1e-12);
    for (j, &i) in order.iter().enumerate() {
        assert_eq!(a.per_sample[i], b.per_sample[j]);
    }
}

#[test]
fn r_squared_falls_as_prediction_noise_grows() {
    let grid = LevelGrid::default();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let obs: Vec<QuantileFunction> = (0..40)
        .map(|_| normal_quantile_function(rng.random_range(-3.0..3.0), rng.random_range(0.5..2.0), &grid).unwrap())
        .collect();
    let base: Vec<f64> = (0..40)
        .map(|_| Normal::new(0.0, 1.0).unwrap().sample(&mut rng))
        .collect();
    let r2: Vec<f64> = [0.1, 0.5, 1.5]
        .iter()
        .map(|&scale| {
            let pred: Vec<QuantileFunction> = obs
                .iter()
                .zip(&base)
                .map(|(q, e)| {
                    QuantileFunction::new(grid.clone(), q.values().iter().map(|v| v + scale * e).collect()).unwrap()
                })
                .collect();
            prediction_loss(&obs, &pred).unwrap().r_squared
        })
        .collect();
    assert!(r2[0] > r2[1] && r2[1] > r2[2], "{r2:?}");
}

#[test]
fn random_simulation_configs_give_valid_datasets() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for i in 0..100 {
        let cfg = SimConfig {
            n_samples: rng.random_range(2..30),
            n_points: rng.random_range(2..40),
            omega: rng.random_range(0.0..3.0),
            seed: i,
            scenario: if i % 2 == 0 {
                Scenario::Mixture
            } else {
                Scenario::Linear
            },
            ..SimConfig::default()
        };
        let d = simulate(&cfg).unwrap();
        assert_eq!(d.n(), cfg.n_samples);
        assert_eq!(d.p(), 3);
        assert!(d.x().iter().all(|v| (-1.0..=1.0).contains(v)));
        for q in d.quantiles(&LevelGrid::default()) {
            assert!(q.values().windows(2).all(|w| w[0] <= w[1]));
        }
    }
}

#[test]
fn component_frequencies_match_the_logistic_weight() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let n = 10_000;
    for x3 in [-1.0, -0.2, 0.6] {
        let x = [0.3, -0.4, x3];
        let draws = draw_mixture_labelled(&mut rng, &x, 0.0, n);
        let freq = draws.iter().filter(|(c, _)| *c == 0).count() as f64 / n as f64;
        let pi1 = 1.0 / (1.0 + f64::exp(x3));
        let se = (pi1 * (1.0 - pi1) / n as f64).sqrt();
        assert!((freq - pi1).abs() <= 3.0 * se, "x3 {x3}: {freq} vs {pi1}");
    }
}

#[test]
fn single_value_pdp_is_the_average_prediction() {
    use wdl::scgmm::predict_quantiles;
    let data = simulate(&SimConfig {
        n_samples: 40,
        n_points: 80,
        seed: 5,
        ..SimConfig::default()
    })
    .unwrap();
    let model = train(
        &data,
        &ScgmmConfig {
            max_boost_iters: 5,
            ..ScgmmConfig::default()
        },
    )
    .unwrap();
    let pdp = functional_pdp(&model, data.x().view(), 1, &[0.25], 0.3).unwrap();
    let grid = LevelGrid::new(vec![0.3]).unwrap();
    let avg = data
        .x()
        .rows()
        .into_iter()
        .map(|r| {
            let mut r = r.to_vec();
            r[1] = 0.25;
            predict_quantiles(&model, &r, &grid).unwrap().values()[0]
        })
        .sum::<f64>()
        / data.n() as f64;
    assert!((pdp.values[0] - avg).abs() <= 1e-12);
}
