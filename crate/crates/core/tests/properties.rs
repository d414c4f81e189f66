//! Property tests over the module invariants.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use bsgl::basis::{BasisConfig, BasisSystem, Bbox};
use bsgl::data::{standardize_predictors, SpatialDataset};
use bsgl::inference::{credible_interval, quantile_sorted};
use bsgl::tuning::kfold_split;

fn column_dataset(col: Vec<f64>) -> SpatialDataset {
    let n = col.len();
    SpatialDataset::new(
        (0..n).map(|i| (i as f64, -(i as f64))).collect(),
        DVector::zeros(n),
        DMatrix::from_column_slice(n, 1, &col),
        vec!["x".into()],
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn basis_partition_of_unity_and_support(
        k in 4usize..8,
        degree in 0usize..4,
        u in 0.0f64..1.0,
        v in 0.0f64..1.0,
        scale in 0.5f64..50.0,
    ) {
        prop_assume!(k > degree);
        let cfg = BasisConfig::new(k, degree, Bbox::new(0.0, scale, -scale, scale));
        let basis = BasisSystem::new(cfg).unwrap();
        let vals = basis.evaluate(u * scale, -scale + 2.0 * scale * v);
        let sum: f64 = vals.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-10);
        prop_assert!(vals.iter().all(|&x| x >= 0.0));
        let nonzero = vals.iter().filter(|&&x| x != 0.0).count();
        prop_assert!(nonzero <= (degree + 1) * (degree + 1));
    }

    #[test]
    fn standardized_columns_stay_in_unit_interval(
        col in prop::collection::vec(-1e6f64..1e6, 2..40),
    ) {
        let (out, record) = standardize_predictors(&column_dataset(col.clone()));
        for &v in out.x.column(0).iter() {
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&v));
        }
        // Reapplying the record to the raw data reproduces the output.
        let again = record.apply(&column_dataset(col)).unwrap();
        prop_assert_eq!(out.x, again.x);
    }

    #[test]
    fn kfold_is_always_a_balanced_partition(
        n in 2usize..200,
        k in 2usize..12,
        seed in any::<u64>(),
    ) {
        prop_assume!(k <= n);
        let folds = kfold_split(n, k, seed).unwrap();
        let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        let sizes: Vec<usize> = folds.iter().map(|f| f.len()).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn credible_intervals_nest_with_level(
        draws in prop::collection::vec(-1e3f64..1e3, 2..200),
        lo_level in 0.05f64..0.5,
        hi_level in 0.5f64..0.99,
    ) {
        let narrow = credible_interval(&draws, lo_level).unwrap();
        let wide = credible_interval(&draws, hi_level).unwrap();
        prop_assert!(wide.0 <= narrow.0 + 1e-12);
        prop_assert!(wide.1 >= narrow.1 - 1e-12);
        // Bounds never leave the sample range.
        let min = draws.iter().copied().fold(f64::INFINITY, f64::min);
        let max = draws.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(wide.0 >= min && wide.1 <= max);
    }

    #[test]
    fn quantile_is_monotone_in_p(
        mut draws in prop::collection::vec(-1e3f64..1e3, 2..100),
        p1 in 0.0f64..1.0,
        p2 in 0.0f64..1.0,
    ) {
        draws.sort_by(f64::total_cmp);
        let (lo, hi) = if p1 <= p2 { (p1, p2) } else { (p2, p1) };
        prop_assert!(quantile_sorted(&draws, lo) <= quantile_sorted(&draws, hi) + 1e-12);
    }
}
