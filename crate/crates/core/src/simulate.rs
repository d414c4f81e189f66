//! Synthetic data generation with known coefficient surfaces.
//!
//! Three predictors carry spatially varying signal (a cosine checkerboard, an
//! oscillatory sheet, and a Gaussian bump); the rest are pure noise with zero
//! coefficients. An optional constant surface on predictor 4 supports the
//! constant-coefficient stress scenario.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::SpatialDataset;
use crate::error::{Error, Result};
use crate::rng::child_rng;

/// Configuration for one synthetic dataset.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub m: usize,
    /// Square domain (lo, hi) on both axes.
    pub domain: (f64, f64),
    pub noise_var: f64,
    /// When set, predictor 4 gets the spatially constant coefficient c.
    pub constant_c: Option<f64>,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(n: usize, m: usize, seed: u64) -> Self {
        Self {
            n,
            m,
            domain: (0.0, 20.0),
            noise_var: 0.1,
            constant_c: None,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidConfig("n must be positive".into()));
        }
        if self.m < 3 {
            return Err(Error::InvalidConfig(format!(
                "need at least the 3 signal predictors, got m={}",
                self.m
            )));
        }
        if self.noise_var.is_nan() || self.noise_var < 0.0 || self.domain.0 >= self.domain.1 {
            return Err(Error::InvalidConfig(format!("bad noise_var or domain: {self:?}")));
        }
        Ok(())
    }
}

/// True coefficient surface for predictor `j` (1-based) at `(u, v)`.
pub fn true_beta(config: &SimConfig, j: usize, u: f64, v: f64) -> f64 {
    use std::f64::consts::PI;
    match j {
        1 => 20.0 * (PI * u / 20.0).cos() * (PI * v / 20.0).cos(),
        2 => 18.0 * (PI * u / 18.0).cos() * (PI * v / 18.0).sin(),
        3 => 20.0 * (-((u - 10.0).powi(2) + (v - 10.0).powi(2)) / 50.0).exp(),
        4 => config.constant_c.unwrap_or(0.0),
        _ => 0.0,
    }
}

/// y = rowwise sum of x * beta_true plus noise. Split out so degenerate
/// inputs (zero truth, zero noise) can be exercised directly.
pub fn assemble_response(x: &DMatrix<f64>, truth: &DMatrix<f64>, noise: &DVector<f64>) -> DVector<f64> {
    let n = x.nrows();
    let mut y = noise.clone();
    for i in 0..n {
        for j in 0..x.ncols() {
            y[i] += x[(i, j)] * truth[(i, j)];
        }
    }
    y
}

/// Generate a dataset and the n x m matrix of true coefficient values at the
/// sampled locations. Locations are uniform on the domain; predictors are
/// standard normal draws min-max rescaled to [0, 1].
pub fn generate_dataset(config: &SimConfig) -> Result<(SpatialDataset, DMatrix<f64>)> {
    config.validate()?;
    let mut rng = child_rng(config.seed, &[0x51]);
    let (lo, hi) = config.domain;
    let n = config.n;
    let m = config.m;

    let locations: Vec<(f64, f64)> = (0..n)
        .map(|_| {
            let u: f64 = rng.random::<f64>() * (hi - lo) + lo;
            let v: f64 = rng.random::<f64>() * (hi - lo) + lo;
            (u, v)
        })
        .collect();

    let mut x = DMatrix::zeros(n, m);
    for j in 0..m {
        for i in 0..n {
            x[(i, j)] = <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng);
        }
        let col_min = x.column(j).iter().copied().fold(f64::INFINITY, f64::min);
        let col_max = x.column(j).iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let width = col_max - col_min;
        if width > 0.0 {
            for i in 0..n {
                x[(i, j)] = (x[(i, j)] - col_min) / width;
            }
        }
    }

    let mut truth = DMatrix::zeros(n, m);
    for (i, &(u, v)) in locations.iter().enumerate() {
        for j in 0..m {
            truth[(i, j)] = true_beta(config, j + 1, u, v);
        }
    }

    let noise = if config.noise_var > 0.0 {
        let normal = Normal::new(0.0, config.noise_var.sqrt()).expect("valid noise sd");
        DVector::from_iterator(n, (0..n).map(|_| normal.sample(&mut rng)))
    } else {
        DVector::zeros(n)
    };

    let y = assemble_response(&x, &truth, &noise);
    let names = (1..=m).map(|j| format!("x{j}")).collect();
    let dataset = SpatialDataset::new(locations, y, x, names)?;
    Ok((dataset, truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize, m: usize, seed: u64) -> SimConfig {
        SimConfig::new(n, m, seed)
    }

    #[test]
    fn true_beta_spot_values() {
        let c = cfg(10, 5, 0);
        assert_eq!(true_beta(&c, 1, 0.0, 0.0), 20.0);
        assert_eq!(true_beta(&c, 3, 10.0, 10.0), 20.0);
        assert_eq!(true_beta(&c, 2, 0.0, 0.0), 0.0);
        assert_eq!(true_beta(&c, 5, 3.7, 12.0), 0.0);
        let with_c = SimConfig { constant_c: Some(1.5), ..c };
        assert_eq!(true_beta(&with_c, 4, 1.0, 2.0), 1.5);
        assert_eq!(true_beta(&c, 4, 1.0, 2.0), 0.0);
    }

    #[test]
    fn zero_truth_zero_noise_gives_zero_response() {
        let x = DMatrix::from_element(6, 3, 0.4);
        let truth = DMatrix::zeros(6, 3);
        let y = assemble_response(&x, &truth, &DVector::zeros(6));
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn generation_is_deterministic() {
        let (a, ta) = generate_dataset(&cfg(200, 5, 99)).unwrap();
        let (b, tb) = generate_dataset(&cfg(200, 5, 99)).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        let (c, _) = generate_dataset(&cfg(200, 5, 100)).unwrap();
        assert_ne!(a.y, c.y);
    }

    #[test]
    fn rescaled_columns_attain_both_bounds() {
        let (ds, _) = generate_dataset(&cfg(500, 4, 3)).unwrap();
        for j in 0..4 {
            let col = ds.x.column(j);
            let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(lo, 0.0);
            assert_eq!(hi, 1.0);
        }
    }

    #[test]
    fn residual_variance_concentrates() {
        let c = cfg(5000, 10, 7);
        let (ds, truth) = generate_dataset(&c).unwrap();
        let resid = &ds.y - assemble_response(&ds.x, &truth, &DVector::zeros(ds.n()));
        let mean = resid.sum() / resid.len() as f64;
        let var = resid.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (resid.len() - 1) as f64;
        assert!((0.09..=0.11).contains(&var), "var={var}");
    }

    #[test]
    fn checkerboard_surface_grid_mean_is_zero() {
        // Quadrature over a symmetric grid: the cosine product integrates to
        // zero over period-aligned axes.
        let c = cfg(10, 3, 0);
        let q = 201;
        let mut acc = 0.0;
        for a in 0..q {
            for b in 0..q {
                let u = 20.0 * a as f64 / (q - 1) as f64;
                let v = 20.0 * b as f64 / (q - 1) as f64;
                acc += true_beta(&c, 1, u, v);
            }
        }
        let mean = acc / (q * q) as f64;
        assert!(mean.abs() < 2e-2, "mean={mean}");
    }

    #[test]
    fn rejects_too_few_predictors() {
        assert!(generate_dataset(&cfg(10, 2, 0)).is_err());
    }

    #[test]
    fn locations_respect_domain() {
        let (ds, _) = generate_dataset(&cfg(300, 3, 5)).unwrap();
        assert!(ds
            .locations
            .iter()
            .all(|&(u, v)| (0.0..=20.0).contains(&u) && (0.0..=20.0).contains(&v)));
    }
}
