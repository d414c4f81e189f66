//! Datasets, hyperparameters, and fit configuration shared across modules.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::basis::BasisConfig;
use crate::error::{Error, Result};
use crate::rng::child_rng;

/// Observations at spatial locations: response `y`, an n x m predictor
/// matrix `x`, and one `(u, v)` coordinate pair per row.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialDataset {
    pub locations: Vec<(f64, f64)>,
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
    pub predictor_names: Vec<String>,
}

impl SpatialDataset {
    pub fn new(
        locations: Vec<(f64, f64)>,
        y: DVector<f64>,
        x: DMatrix<f64>,
        predictor_names: Vec<String>,
    ) -> Result<Self> {
        let n = locations.len();
        if n == 0 || x.ncols() == 0 {
            return Err(Error::EmptyDataset);
        }
        if y.len() != n || x.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "locations={n}, y={}, x rows={}",
                y.len(),
                x.nrows()
            )));
        }
        if predictor_names.len() != x.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "{} predictor names for {} columns",
                predictor_names.len(),
                x.ncols()
            )));
        }
        let all_finite = y.iter().all(|v| v.is_finite())
            && x.iter().all(|v| v.is_finite())
            && locations.iter().all(|(u, v)| u.is_finite() && v.is_finite());
        if !all_finite {
            return Err(Error::DimensionMismatch(
                "dataset contains non-finite values".into(),
            ));
        }
        Ok(Self { locations, y, x, predictor_names })
    }

    pub fn n(&self) -> usize {
        self.locations.len()
    }

    pub fn m(&self) -> usize {
        self.x.ncols()
    }

    /// Row subset in the given index order.
    pub fn subset(&self, idx: &[usize]) -> Self {
        let locations: Vec<_> = idx.iter().map(|&i| self.locations[i]).collect();
        let y = DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.y[i]));
        let mut x = DMatrix::zeros(idx.len(), self.m());
        for (r, &i) in idx.iter().enumerate() {
            x.row_mut(r).copy_from(&self.x.row(i));
        }
        Self {
            locations,
            y,
            x,
            predictor_names: self.predictor_names.clone(),
        }
    }
}

/// Per-column (min, max) fitted on training data, reapplied to held-out data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StandardizeRecord {
    pub ranges: Vec<(f64, f64)>,
    pub constant_columns: Vec<usize>,
}

impl StandardizeRecord {
    /// Map columns through the recorded ranges; values outside the training
    /// range land outside [0, 1], which is permitted.
    pub fn apply(&self, dataset: &SpatialDataset) -> Result<SpatialDataset> {
        if self.ranges.len() != dataset.m() {
            return Err(Error::DimensionMismatch(format!(
                "record has {} columns, dataset has {}",
                self.ranges.len(),
                dataset.m()
            )));
        }
        let mut out = dataset.clone();
        for (j, &(lo, hi)) in self.ranges.iter().enumerate() {
            let width = hi - lo;
            for i in 0..out.n() {
                out.x[(i, j)] = if width > 0.0 {
                    (out.x[(i, j)] - lo) / width
                } else {
                    0.5
                };
            }
        }
        Ok(out)
    }
}

/// Min-max standardize each predictor column to [0, 1]. Constant columns map
/// to 0.5 and are listed in the record rather than rejected.
pub fn standardize_predictors(dataset: &SpatialDataset) -> (SpatialDataset, StandardizeRecord) {
    let m = dataset.m();
    let mut ranges = Vec::with_capacity(m);
    let mut constant_columns = Vec::new();
    for j in 0..m {
        let col = dataset.x.column(j);
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi <= lo {
            constant_columns.push(j);
        }
        ranges.push((lo, hi));
    }
    let record = StandardizeRecord { ranges, constant_columns };
    let standardized = record
        .apply(dataset)
        .expect("record was built from this dataset");
    (standardized, record)
}

const SPLIT_STREAM: u64 = 0x5911;

/// Disjoint train/test split with |test| = round(fraction * n), at least 1.
pub fn train_test_split(
    dataset: &SpatialDataset,
    fraction: f64,
    seed: u64,
) -> Result<(SpatialDataset, SpatialDataset)> {
    let n = dataset.n();
    if !(0.0..1.0).contains(&fraction) || fraction <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "test fraction must be in (0, 1), got {fraction}"
        )));
    }
    let n_test = ((fraction * n as f64).round() as usize).max(1);
    if n_test >= n {
        return Err(Error::DegenerateSplit { fraction, n });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = child_rng(seed, &[SPLIT_STREAM]);
    idx.shuffle(&mut rng);
    let (test_idx, train_idx) = idx.split_at(n_test);
    let mut train_idx = train_idx.to_vec();
    let mut test_idx = test_idx.to_vec();
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    Ok((dataset.subset(&train_idx), dataset.subset(&test_idx)))
}

/// Inverse-Gamma shape/rate for the noise variance and Gamma shape/rate for
/// the global shrinkage parameter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub a_sigma: f64,
    pub b_sigma: f64,
    pub a_lambda: f64,
    pub b_lambda: f64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self { a_sigma: 0.01, b_sigma: 0.01, a_lambda: 15.0, b_lambda: 0.1 }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<()> {
        let ok = self.a_sigma > 0.0 && self.b_sigma > 0.0 && self.a_lambda > 0.0 && self.b_lambda > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("hyperparameters must be positive: {self:?}")))
        }
    }
}

/// Full sampler configuration for one fit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub basis: BasisConfig,
    pub hyper: Hyperparameters,
    pub n_iter: usize,
    pub warmup: usize,
    pub n_chains: usize,
    pub ci_level: f64,
    pub seed: u64,
    pub include_intercept: bool,
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        if self.n_iter == 0 || self.warmup >= self.n_iter {
            return Err(Error::InvalidConfig(format!(
                "warmup ({}) must be smaller than n_iter ({})",
                self.warmup, self.n_iter
            )));
        }
        if self.n_chains == 0 {
            return Err(Error::InvalidConfig("n_chains must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.ci_level) || self.ci_level == 0.0 {
            return Err(Error::InvalidConfig(format!(
                "ci_level must lie in (0, 1), got {}",
                self.ci_level
            )));
        }
        Ok(())
    }

    /// Retained draws per chain.
    pub fn kept(&self) -> usize {
        self.n_iter - self.warmup
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{BasisConfig, Bbox};

    fn toy(col: &[f64]) -> SpatialDataset {
        let n = col.len();
        SpatialDataset::new(
            (0..n).map(|i| (i as f64, 0.0)).collect(),
            DVector::zeros(n),
            DMatrix::from_column_slice(n, 1, col),
            vec!["x1".into()],
        )
        .unwrap()
    }

    #[test]
    fn affine_map_definition() {
        let (s, rec) = standardize_predictors(&toy(&[2.0, 4.0, 6.0]));
        assert_eq!(s.x.column(0).as_slice(), &[0.0, 0.5, 1.0]);
        assert_eq!(rec.ranges, vec![(2.0, 6.0)]);
        assert!(rec.constant_columns.is_empty());
    }

    #[test]
    fn unit_range_column_unchanged() {
        let (s, _) = standardize_predictors(&toy(&[0.0, 0.25, 1.0]));
        assert_eq!(s.x.column(0).as_slice(), &[0.0, 0.25, 1.0]);
    }

    #[test]
    fn constant_column_maps_to_half_with_warning() {
        let (s, rec) = standardize_predictors(&toy(&[3.0, 3.0, 3.0]));
        assert_eq!(s.x.column(0).as_slice(), &[0.5, 0.5, 0.5]);
        assert_eq!(rec.constant_columns, vec![0]);
    }

    #[test]
    fn restandardize_is_idempotent_on_training_data() {
        let (s, rec) = standardize_predictors(&toy(&[-1.0, 0.5, 7.0, 2.0]));
        let again = StandardizeRecord {
            ranges: vec![(0.0, 1.0)],
            constant_columns: vec![],
        }
        .apply(&s)
        .unwrap();
        assert_eq!(s.x, again.x);
        // Reapplying the original record to raw data matches as well.
        let raw = toy(&[-1.0, 0.5, 7.0, 2.0]);
        assert_eq!(rec.apply(&raw).unwrap().x, s.x);
    }

    #[test]
    fn record_applied_to_test_data_may_leave_unit_interval() {
        let rec = StandardizeRecord { ranges: vec![(0.0, 2.0)], constant_columns: vec![] };
        let out = rec.apply(&toy(&[-2.0, 4.0])).unwrap();
        assert_eq!(out.x.column(0).as_slice(), &[-1.0, 2.0]);
    }

    fn numbered(n: usize) -> SpatialDataset {
        let col: Vec<f64> = (0..n).map(|i| i as f64).collect();
        toy(&col)
    }

    #[test]
    fn split_sizes_follow_rounding_convention() {
        let (train, test) = train_test_split(&numbered(10), 0.2, 9).unwrap();
        assert_eq!(train.n(), 8);
        assert_eq!(test.n(), 2);
    }

    #[test]
    fn split_is_a_partition_and_deterministic() {
        let ds = numbered(23);
        let (tr1, te1) = train_test_split(&ds, 0.3, 42).unwrap();
        let (tr2, te2) = train_test_split(&ds, 0.3, 42).unwrap();
        assert_eq!(tr1, tr2);
        assert_eq!(te1, te2);
        let mut seen: Vec<f64> = tr1
            .x
            .column(0)
            .iter()
            .chain(te1.x.column(0).iter())
            .copied()
            .collect();
        seen.sort_by(f64::total_cmp);
        let expect: Vec<f64> = (0..23).map(|i| i as f64).collect();
        assert_eq!(seen, expect);
    }

    #[test]
    fn degenerate_splits_error() {
        assert!(matches!(
            train_test_split(&numbered(1), 0.2, 0),
            Err(Error::DegenerateSplit { .. })
        ));
        assert!(matches!(
            train_test_split(&numbered(10), 0.97, 0),
            Err(Error::DegenerateSplit { .. })
        ));
    }

    #[test]
    fn config_validation() {
        let cfg = FitConfig {
            basis: BasisConfig::new(4, 3, Bbox::new(0.0, 1.0, 0.0, 1.0)),
            hyper: Hyperparameters::default(),
            n_iter: 100,
            warmup: 100,
            n_chains: 2,
            ci_level: 0.95,
            seed: 1,
            include_intercept: false,
        };
        assert!(cfg.validate().is_err());
        let ok = FitConfig { warmup: 50, ..cfg };
        assert!(ok.validate().is_ok());
        assert_eq!(ok.kept(), 50);
        assert!(FitConfig { ci_level: 1.0, ..ok }.validate().is_err());
    }
}
