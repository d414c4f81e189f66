//! End-to-end cross-validation behavior on simulated data.

mod common;

use bsgl::basis::{BasisConfig, BasisSystem, Bbox};
use bsgl::data::{standardize_predictors, FitConfig, Hyperparameters};
use bsgl::inference::pooled_mean_alpha;
use bsgl::sampler::{run_chains, DesignBlocks};
use bsgl::simulate::{generate_dataset, true_beta, SimConfig};
use bsgl::tuning::{grid_search, TuningGrid};

fn base_config(seed: u64) -> FitConfig {
    FitConfig {
        basis: BasisConfig::new(4, 3, Bbox::new(0.0, 20.0, 0.0, 20.0)),
        hyper: Hyperparameters::default(),
        n_iter: 400,
        warmup: 100,
        n_chains: 1,
        ci_level: 0.95,
        seed,
        include_intercept: false,
    }
}

#[test]
fn grid_search_is_deterministic_and_consistent() {
    let (ds, _) = generate_dataset(&SimConfig::new(400, 4, 21)).unwrap();
    let grid = TuningGrid {
        l_values: vec![16, 25],
        a_lambda_values: vec![15.0, 30.0],
        b_lambda_values: vec![0.1],
        cv_folds: 3,
        cv_iters: 300,
        cv_warmup: 100,
    };
    let base = base_config(77);
    let (best1, table1) = grid_search(&ds, &grid, &base).unwrap();
    let (best2, table2) = grid_search(&ds, &grid, &base).unwrap();
    assert_eq!(table1, table2);
    assert_eq!(best1, best2);

    assert_eq!(table1.combos.len(), grid.combinations());
    let min = table1
        .combos
        .iter()
        .map(|c| c.mean_mspe)
        .fold(f64::INFINITY, f64::min);
    assert_eq!(best1.mean_mspe, min);
    assert!(table1.combos.iter().all(|c| !c.failed));
    assert!(table1.combos.iter().all(|c| c.fold_mspe.len() == 3));
}

#[test]
fn singleton_grid_returns_that_configuration() {
    let (ds, _) = generate_dataset(&SimConfig::new(200, 3, 22)).unwrap();
    let grid = TuningGrid {
        l_values: vec![16],
        a_lambda_values: vec![20.0],
        b_lambda_values: vec![0.5],
        cv_folds: 2,
        cv_iters: 200,
        cv_warmup: 50,
    };
    let (best, table) = grid_search(&ds, &grid, &base_config(5)).unwrap();
    assert_eq!((best.l, best.a_lambda, best.b_lambda), (16, 20.0, 0.5));
    assert_eq!(table.combos.len(), 1);
    assert!(best.mean_mspe.is_finite());
}

/// Mean squared error between posterior-mean surfaces and the truth over
/// the signal predictors, at the data locations.
fn signal_mse(
    samples: &[bsgl::sampler::ChainSamples],
    basis: &BasisSystem,
    locations: &[(f64, f64)],
    sim: &SimConfig,
) -> f64 {
    let psi = basis.design_matrix(locations);
    let mut acc = 0.0;
    for j in 0..3 {
        let mean_alpha = pooled_mean_alpha(samples, j);
        let est = &psi * &mean_alpha;
        let mse: f64 = locations
            .iter()
            .enumerate()
            .map(|(i, &(u, v))| (est[i] - true_beta(sim, j + 1, u, v)).powi(2))
            .sum::<f64>()
            / locations.len() as f64;
        acc += mse;
    }
    acc / 3.0
}

#[test]
fn selected_configuration_beats_the_worst_grid_member() {
    // Desk-scale version of the selection sanity check: CV picks a
    // configuration whose refit surface error is not the grid's worst.
    let sim = SimConfig::new(2000, 10, 23);
    let (ds, _) = generate_dataset(&sim).unwrap();
    let grid = TuningGrid {
        l_values: vec![16, 25],
        a_lambda_values: vec![15.0, 30.0],
        b_lambda_values: vec![0.1],
        cv_folds: 5,
        cv_iters: 1000,
        cv_warmup: 200,
    };
    let base = base_config(31);
    let (best, table) = grid_search(&ds, &grid, &base).unwrap();

    // Refit every grid member at moderate length and score MSE over the
    // signal surfaces.
    let (std_ds, _) = standardize_predictors(&ds);
    let mut mse_by_combo = Vec::new();
    for combo in &table.combos {
        let per_dim = (combo.l as f64).sqrt() as usize;
        let cfg = FitConfig {
            basis: BasisConfig::new(per_dim, 3, Bbox::from_locations(&std_ds.locations, 0.0)),
            hyper: Hyperparameters {
                a_lambda: combo.a_lambda,
                b_lambda: combo.b_lambda,
                ..base.hyper
            },
            n_iter: 1500,
            warmup: 500,
            n_chains: 1,
            ci_level: 0.95,
            seed: 99,
            include_intercept: false,
        };
        let basis = BasisSystem::new(cfg.basis).unwrap();
        let blocks = DesignBlocks::new(&std_ds, &basis, false);
        let samples = run_chains(&blocks, &cfg).unwrap();
        let mse = signal_mse(&samples, &basis, &std_ds.locations, &sim);
        mse_by_combo.push((combo.l, combo.a_lambda, combo.b_lambda, mse));
    }
    let selected_mse = mse_by_combo
        .iter()
        .find(|(l, a, b, _)| *l == best.l && *a == best.a_lambda && *b == best.b_lambda)
        .unwrap()
        .3;
    let worst_mse = mse_by_combo.iter().map(|r| r.3).fold(f64::NEG_INFINITY, f64::max);
    assert!(
        selected_mse < worst_mse,
        "selected {selected_mse} not below worst {worst_mse} ({mse_by_combo:?})"
    );
}
