//! Cross-validated selection of the basis size and shrinkage
//! hyperparameters over a configuration grid.
//!
//! Each (L, a_lambda, b_lambda) combination is scored by the average
//! held-fold mean squared prediction error under a reduced single-chain
//! protocol. Fold standardization and the basis bounding box come from the
//! training folds only, so held-out rows never leak into the fit.

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisConfig, Bbox, BasisSystem};
use crate::data::{standardize_predictors, FitConfig, Hyperparameters, SpatialDataset};
use crate::error::{Error, Result};
use crate::inference::{mspe, pooled_mean_alpha};
use crate::rng::{child_rng, derive_seed};
use crate::sampler::{run_chain, DesignBlocks};

const FOLD_STREAM: u64 = 0xf01d;
const CV_STREAM: u64 = 0xc0de;

/// Hyperparameter grid and the reduced CV fit protocol.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TuningGrid {
    /// Total basis counts; every value must be a perfect square.
    pub l_values: Vec<usize>,
    pub a_lambda_values: Vec<f64>,
    pub b_lambda_values: Vec<f64>,
    pub cv_folds: usize,
    pub cv_iters: usize,
    pub cv_warmup: usize,
}

impl Default for TuningGrid {
    fn default() -> Self {
        Self {
            l_values: vec![16, 25, 36, 49],
            a_lambda_values: vec![15.0, 30.0, 35.0, 40.0, 45.0],
            b_lambda_values: vec![0.01, 0.1, 1.0],
            cv_folds: 5,
            cv_iters: 1000,
            cv_warmup: 200,
        }
    }
}

impl TuningGrid {
    pub fn validate(&self) -> Result<()> {
        if self.l_values.is_empty() || self.a_lambda_values.is_empty() || self.b_lambda_values.is_empty() {
            return Err(Error::EmptyGrid);
        }
        for &l in &self.l_values {
            if per_dim_count(l).is_none() {
                return Err(Error::InvalidConfig(format!("L={l} is not a perfect square")));
            }
        }
        if self.cv_folds < 2 {
            return Err(Error::InvalidConfig("cv_folds must be at least 2".into()));
        }
        if self.cv_warmup >= self.cv_iters {
            return Err(Error::InvalidConfig(format!(
                "cv_warmup ({}) must be smaller than cv_iters ({})",
                self.cv_warmup, self.cv_iters
            )));
        }
        if self
            .a_lambda_values
            .iter()
            .chain(&self.b_lambda_values)
            .any(|&v| v.is_nan() || v <= 0.0)
        {
            return Err(Error::InvalidConfig("grid values must be positive".into()));
        }
        Ok(())
    }

    /// Number of grid combinations.
    pub fn combinations(&self) -> usize {
        self.l_values.len() * self.a_lambda_values.len() * self.b_lambda_values.len()
    }

    /// Combinations in selection order: L ascending-major, then a, then b.
    fn combos(&self) -> Vec<(usize, f64, f64)> {
        let mut out = Vec::with_capacity(self.combinations());
        for &l in &self.l_values {
            for &a in &self.a_lambda_values {
                for &b in &self.b_lambda_values {
                    out.push((l, a, b));
                }
            }
        }
        out
    }
}

fn per_dim_count(l: usize) -> Option<usize> {
    let r = (l as f64).sqrt().round() as usize;
    (r * r == l).then_some(r)
}

/// Partition 0..n into k folds whose sizes differ by at most one.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k > n {
        return Err(Error::TooManyFolds { k, n });
    }
    if k == 0 {
        return Err(Error::InvalidConfig("k must be positive".into()));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = child_rng(seed, &[FOLD_STREAM]);
    idx.shuffle(&mut rng);
    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        let mut fold: Vec<usize> = idx[start..start + size].to_vec();
        fold.sort_unstable();
        folds.push(fold);
        start += size;
    }
    Ok(folds)
}

/// Per-combination CV outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComboScore {
    pub l: usize,
    pub a_lambda: f64,
    pub b_lambda: f64,
    /// Held-fold MSPE per fold; +inf where the fold fit aborted.
    pub fold_mspe: Vec<f64>,
    pub mean_mspe: f64,
    pub failed: bool,
}

/// Full score table in combination order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuningTable {
    pub combos: Vec<ComboScore>,
    pub folds: usize,
}

/// Winning configuration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestConfig {
    pub l: usize,
    pub a_lambda: f64,
    pub b_lambda: f64,
    pub mean_mspe: f64,
}

/// Index of the score-table minimum. Combination order already encodes the
/// tie-break (smaller L, then smaller a, then smaller b), so strict
/// less-than keeps the first minimum.
pub(crate) fn select_best(combos: &[ComboScore]) -> usize {
    let mut best = 0;
    for (i, c) in combos.iter().enumerate() {
        if c.mean_mspe < combos[best].mean_mspe {
            best = i;
        }
    }
    best
}

#[allow(clippy::too_many_arguments)]
fn score_fold(
    dataset: &SpatialDataset,
    train_idx: &[usize],
    test_idx: &[usize],
    l: usize,
    a_lambda: f64,
    b_lambda: f64,
    grid: &TuningGrid,
    base: &FitConfig,
    fit_seed: u64,
) -> Result<f64> {
    let train = dataset.subset(train_idx);
    let test = dataset.subset(test_idx);
    let (strain, record) = standardize_predictors(&train);
    let stest = record.apply(&test)?;

    let per_dim = per_dim_count(l).expect("validated perfect square");
    let bbox = Bbox::from_locations(&strain.locations, 0.0);
    let basis_cfg = BasisConfig::new(per_dim, base.basis.degree, bbox);
    let basis = BasisSystem::new(basis_cfg)?;
    let blocks = DesignBlocks::new(&strain, &basis, base.include_intercept);

    let cfg = FitConfig {
        basis: basis_cfg,
        hyper: Hyperparameters {
            a_lambda,
            b_lambda,
            ..base.hyper
        },
        n_iter: grid.cv_iters,
        warmup: grid.cv_warmup,
        n_chains: 1,
        ci_level: base.ci_level,
        seed: fit_seed,
        include_intercept: base.include_intercept,
    };
    let samples = run_chain(&blocks, &cfg, 0)?;

    // Structural posterior-mean prediction on the held fold.
    let pooled = std::slice::from_ref(&samples);
    let mean_alpha: Vec<DVector<f64>> = (0..blocks.n_groups())
        .map(|j| pooled_mean_alpha(pooled, j))
        .collect();
    let psi_test = basis.design_matrix(&stest.locations);
    let mut pred = vec![0.0; stest.n()];
    for (j, alpha) in mean_alpha.iter().enumerate() {
        let surf = &psi_test * alpha;
        for i in 0..stest.n() {
            let x = if base.include_intercept && j == 0 {
                1.0
            } else {
                stest.x[(i, j - usize::from(base.include_intercept))]
            };
            pred[i] += x * surf[i];
        }
    }
    mspe(&pred, stest.y.as_slice())
}

/// Evaluate every grid combination by k-fold CV and return the argmin with
/// the complete score table. Work items get RNG streams keyed by combination
/// and fold index, so the table does not depend on evaluation order.
pub fn grid_search(
    dataset: &SpatialDataset,
    grid: &TuningGrid,
    base: &FitConfig,
) -> Result<(BestConfig, TuningTable)> {
    grid.validate()?;
    let folds = kfold_split(dataset.n(), grid.cv_folds, base.seed)?;
    let combos = grid.combos();

    // Precompute per-fold train/test index sets.
    let splits: Vec<(Vec<usize>, Vec<usize>)> = (0..grid.cv_folds)
        .map(|f| {
            let test = folds[f].clone();
            let train: Vec<usize> = (0..grid.cv_folds)
                .filter(|&g| g != f)
                .flat_map(|g| folds[g].iter().copied())
                .collect();
            (train, test)
        })
        .collect();

    let mut jobs = Vec::with_capacity(combos.len() * grid.cv_folds);
    for (ci, &(l, a, b)) in combos.iter().enumerate() {
        for f in 0..grid.cv_folds {
            jobs.push((ci, f, l, a, b));
        }
    }
    let scores: Vec<f64> = jobs
        .par_iter()
        .map(|&(ci, f, l, a, b)| {
            let fit_seed = derive_seed(base.seed, &[CV_STREAM, ci as u64, f as u64]);
            let (train_idx, test_idx) = &splits[f];
            score_fold(dataset, train_idx, test_idx, l, a, b, grid, base, fit_seed)
                .unwrap_or(f64::INFINITY)
        })
        .collect();

    let mut table = Vec::with_capacity(combos.len());
    for (ci, &(l, a, b)) in combos.iter().enumerate() {
        let fold_mspe: Vec<f64> = (0..grid.cv_folds)
            .map(|f| scores[ci * grid.cv_folds + f])
            .collect();
        let failed = fold_mspe.iter().any(|s| !s.is_finite());
        let mean_mspe = if failed {
            f64::INFINITY
        } else {
            fold_mspe.iter().sum::<f64>() / fold_mspe.len() as f64
        };
        table.push(ComboScore { l, a_lambda: a, b_lambda: b, fold_mspe, mean_mspe, failed });
    }
    let best_idx = select_best(&table);
    let best = BestConfig {
        l: table[best_idx].l,
        a_lambda: table[best_idx].a_lambda,
        b_lambda: table[best_idx].b_lambda,
        mean_mspe: table[best_idx].mean_mspe,
    };
    Ok((best, TuningTable { combos: table, folds: grid.cv_folds }))
}
