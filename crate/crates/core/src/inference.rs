//! Posterior surface reconstruction, credible intervals, significance maps,
//! spatial coverage probabilities, and evaluation metrics.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::basis::BasisSystem;
use crate::data::SpatialDataset;
use crate::error::{Error, Result};
use crate::rng::child_rng;
use crate::sampler::ChainSamples;

const PREDICT_STREAM: u64 = 0x9ced;
/// Grid points processed per block when summarizing surfaces, keeping the
/// draws-by-locations buffer bounded.
const SURFACE_BLOCK: usize = 512;

/// Where coefficient surfaces are evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum InferenceGrid {
    /// The observed training locations (default; matches the metric
    /// definitions over the data points).
    Observed,
    /// A regular q x q grid over the basis bounding box.
    Regular { q: usize },
}

impl InferenceGrid {
    pub fn points(&self, locations: &[(f64, f64)], basis: &BasisSystem) -> Vec<(f64, f64)> {
        match *self {
            InferenceGrid::Observed => locations.to_vec(),
            InferenceGrid::Regular { q } => {
                let bb = basis.config().bbox;
                let q = q.max(2);
                let mut pts = Vec::with_capacity(q * q);
                for a in 0..q {
                    let u = bb.u_min + (bb.u_max - bb.u_min) * a as f64 / (q - 1) as f64;
                    for b in 0..q {
                        let v = bb.v_min + (bb.v_max - bb.v_min) * b as f64 / (q - 1) as f64;
                        pts.push((u, v));
                    }
                }
                pts
            }
        }
    }
}

/// Linear-interpolation quantile on a sorted slice (R type 7).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Equal-tailed credible interval at `ci_level` from raw draws.
pub fn credible_interval(draws: &[f64], ci_level: f64) -> Result<(f64, f64)> {
    if draws.is_empty() {
        return Err(Error::EmptyDraws);
    }
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let tail = (1.0 - ci_level) / 2.0;
    Ok((quantile_sorted(&sorted, tail), quantile_sorted(&sorted, 1.0 - tail)))
}

/// Per-draw values of one coefficient surface on a grid.
#[derive(Clone, Debug)]
pub struct SurfaceDraws {
    pub predictor: usize,
    pub grid: Vec<(f64, f64)>,
    /// draws[(t, g)] = surface value of posterior draw t at grid point g.
    pub draws: DMatrix<f64>,
}

/// Pooled post-warmup coefficient draws of group `j` as a draws-by-L matrix.
pub fn pooled_alpha_matrix(samples: &[ChainSamples], j: usize) -> DMatrix<f64> {
    let total: usize = samples.iter().map(|s| s.n_kept()).sum();
    let l = samples.first().map_or(0, |s| s.basis_len());
    let mut a = DMatrix::zeros(total, l);
    let mut row = 0;
    for s in samples {
        for t in 0..s.n_kept() {
            a.row_mut(row).copy_from_slice(s.alpha_at(t, j));
            row += 1;
        }
    }
    a
}

/// Pooled post-warmup noise-variance draws in chain order.
pub fn pooled_sigma2(samples: &[ChainSamples]) -> Vec<f64> {
    samples.iter().flat_map(|s| s.sigma2().iter().copied()).collect()
}

/// Posterior mean of group j's coefficient vector over pooled draws.
pub fn pooled_mean_alpha(samples: &[ChainSamples], j: usize) -> DVector<f64> {
    let l = samples.first().map_or(0, |s| s.basis_len());
    let mut acc = DVector::zeros(l);
    let mut count = 0usize;
    for s in samples {
        for t in 0..s.n_kept() {
            for (i, &v) in s.alpha_at(t, j).iter().enumerate() {
                acc[i] += v;
            }
            count += 1;
        }
    }
    if count > 0 {
        acc /= count as f64;
    }
    acc
}

/// Evaluate the surface draws of predictor group `j` at the grid points.
pub fn surface_draws(
    samples: &[ChainSamples],
    basis: &BasisSystem,
    grid: &[(f64, f64)],
    j: usize,
) -> SurfaceDraws {
    let a = pooled_alpha_matrix(samples, j);
    let psi = basis.design_matrix(grid); // G x L
    let draws = &a * psi.transpose(); // T x G
    SurfaceDraws { predictor: j, grid: grid.to_vec(), draws }
}

/// Boolean surface of credible-interval-excludes-zero decisions.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SignificanceMap {
    pub predictor: usize,
    pub grid: Vec<(f64, f64)>,
    pub significant: Vec<bool>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub ci_level: f64,
}

/// Decide significance pointwise; an interval with an endpoint exactly at
/// zero counts as containing zero.
pub fn significance_map(surfaces: &SurfaceDraws, ci_level: f64) -> Result<SignificanceMap> {
    let g = surfaces.grid.len();
    let t = surfaces.draws.nrows();
    let mut lo = Vec::with_capacity(g);
    let mut hi = Vec::with_capacity(g);
    let mut significant = Vec::with_capacity(g);
    let mut buf = vec![0.0; t];
    for gi in 0..g {
        for (ti, b) in buf.iter_mut().enumerate() {
            *b = surfaces.draws[(ti, gi)];
        }
        let (l, h) = credible_interval(&buf, ci_level)?;
        significant.push(l > 0.0 || h < 0.0);
        lo.push(l);
        hi.push(h);
    }
    Ok(SignificanceMap {
        predictor: surfaces.predictor,
        grid: surfaces.grid.clone(),
        significant,
        lo,
        hi,
        ci_level,
    })
}

/// Spatial coverage probability: the fraction of grid locations where the
/// credible interval excludes zero.
pub fn scp(map: &SignificanceMap) -> f64 {
    if map.significant.is_empty() {
        return 0.0;
    }
    map.significant.iter().filter(|&&s| s).count() as f64 / map.significant.len() as f64
}

/// Posterior summary of one coefficient surface: pointwise mean, interval
/// bounds, significance, and SCP.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SurfaceSummary {
    pub predictor: usize,
    pub name: String,
    pub grid: Vec<(f64, f64)>,
    pub mean: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub significant: Vec<bool>,
    pub ci_level: f64,
    pub scp: f64,
}

impl SurfaceSummary {
    pub fn map(&self) -> SignificanceMap {
        SignificanceMap {
            predictor: self.predictor,
            grid: self.grid.clone(),
            significant: self.significant.clone(),
            lo: self.lo.clone(),
            hi: self.hi.clone(),
            ci_level: self.ci_level,
        }
    }
}

/// Summarize one predictor's surface over a grid, processing grid points in
/// blocks so the draws buffer stays bounded on large grids.
pub fn surface_summary(
    samples: &[ChainSamples],
    basis: &BasisSystem,
    grid: &[(f64, f64)],
    j: usize,
    name: &str,
    ci_level: f64,
) -> Result<SurfaceSummary> {
    let a = pooled_alpha_matrix(samples, j);
    let t = a.nrows();
    let g = grid.len();
    let mut mean = Vec::with_capacity(g);
    let mut lo = Vec::with_capacity(g);
    let mut hi = Vec::with_capacity(g);
    let mut significant = Vec::with_capacity(g);
    let mut buf = vec![0.0; t];
    let tail = (1.0 - ci_level) / 2.0;

    for chunk in grid.chunks(SURFACE_BLOCK) {
        let psi = basis.design_matrix(chunk);
        let block = &a * psi.transpose(); // t x |chunk|
        for c in 0..chunk.len() {
            for (ti, b) in buf.iter_mut().enumerate() {
                *b = block[(ti, c)];
            }
            mean.push(buf.iter().sum::<f64>() / t as f64);
            buf.sort_by(f64::total_cmp);
            let l = quantile_sorted(&buf, tail);
            let h = quantile_sorted(&buf, 1.0 - tail);
            significant.push(l > 0.0 || h < 0.0);
            lo.push(l);
            hi.push(h);
        }
    }
    let scp_val = significant.iter().filter(|&&s| s).count() as f64 / g.max(1) as f64;
    Ok(SurfaceSummary {
        predictor: j,
        name: name.to_string(),
        grid: grid.to_vec(),
        mean,
        lo,
        hi,
        significant,
        ci_level,
        scp: scp_val,
    })
}

/// Pointwise F1 and false positive rate against a known truth surface.
/// Truth at a location is "signal" when the true value is nonzero. F1 is 0
/// when there are no detections or no true signal; FPR is 0 when there are
/// no truly null locations.
pub fn selection_metrics(true_surface: &[f64], map: &SignificanceMap) -> Result<(f64, f64)> {
    if true_surface.len() != map.significant.len() {
        return Err(Error::DimensionMismatch(format!(
            "truth has {} points, map has {}",
            true_surface.len(),
            map.significant.len()
        )));
    }
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    let mut tn = 0usize;
    for (&truth, &detected) in true_surface.iter().zip(&map.significant) {
        match (truth != 0.0, detected) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let f1 = if tp + fp == 0 || tp + fn_ == 0 {
        0.0
    } else {
        let precision = tp as f64 / (tp + fp) as f64;
        let recall = tp as f64 / (tp + fn_) as f64;
        if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        }
    };
    let null_count = fp + tn;
    let fpr = if null_count == 0 { 0.0 } else { fp as f64 / null_count as f64 };
    Ok((f1, fpr))
}

/// Mean squared prediction error.
pub fn mspe(predicted: &[f64], observed: &[f64]) -> Result<f64> {
    if predicted.len() != observed.len() || predicted.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "predicted {} vs observed {}",
            predicted.len(),
            observed.len()
        )));
    }
    let sum: f64 = predicted.iter().zip(observed).map(|(p, o)| (p - o).powi(2)).sum();
    Ok(sum / predicted.len() as f64)
}

/// Signal-surface estimation error: average over the signal predictors of
/// the per-location mean squared gap between estimated and true surfaces.
pub fn mse_signal(
    estimated: &[Vec<f64>],
    truth: &[Vec<f64>],
    signal_indices: &[usize],
) -> Result<f64> {
    if signal_indices.is_empty() {
        return Err(Error::DimensionMismatch("no signal indices".into()));
    }
    let mut acc = 0.0;
    for &j in signal_indices {
        let est = &estimated[j];
        let tru = &truth[j];
        if est.len() != tru.len() || est.is_empty() {
            return Err(Error::DimensionMismatch(format!(
                "surface {j}: estimated {} vs truth {}",
                est.len(),
                tru.len()
            )));
        }
        let mse: f64 = est.iter().zip(tru).map(|(e, t)| (e - t).powi(2)).sum::<f64>() / est.len() as f64;
        acc += mse;
    }
    Ok(acc / signal_indices.len() as f64)
}

/// Noise-surface suppression error: average squared magnitude of estimated
/// surfaces whose truth is identically zero.
pub fn mse_noise(estimated: &[Vec<f64>], noise_indices: &[usize]) -> Result<f64> {
    if noise_indices.is_empty() {
        return Err(Error::NoNoisePredictors(3));
    }
    let mut acc = 0.0;
    for &j in noise_indices {
        let est = &estimated[j];
        if est.is_empty() {
            return Err(Error::DimensionMismatch(format!("surface {j} is empty")));
        }
        acc += est.iter().map(|e| e * e).sum::<f64>() / est.len() as f64;
    }
    Ok(acc / noise_indices.len() as f64)
}

/// Point predictions with equal-tailed posterior predictive intervals.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Predictions {
    pub point: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub ci_level: f64,
}

/// Posterior predictive distribution at new locations. Predictors of
/// `dataset` must already carry the training standardization. Per draw, the
/// structural part sums x_j * beta_j at the location; predictive noise
/// N(0, sigma2_draw) enters the intervals. The point prediction is the
/// posterior mean of the structural part.
pub fn predict(
    samples: &[ChainSamples],
    basis: &BasisSystem,
    dataset: &SpatialDataset,
    include_intercept: bool,
    ci_level: f64,
    seed: u64,
) -> Result<Predictions> {
    let n_groups = samples.first().map_or(0, |s| s.n_groups());
    let expected = dataset.m() + usize::from(include_intercept);
    if n_groups != expected {
        return Err(Error::DimensionMismatch(format!(
            "samples carry {n_groups} groups but dataset implies {expected}"
        )));
    }
    let alphas: Vec<DMatrix<f64>> = (0..n_groups).map(|j| pooled_alpha_matrix(samples, j)).collect();
    let sigma2 = pooled_sigma2(samples);
    let t = sigma2.len();
    let n = dataset.n();
    let mut rng = child_rng(seed, &[PREDICT_STREAM]);

    let mut point = Vec::with_capacity(n);
    let mut lo = Vec::with_capacity(n);
    let mut hi = Vec::with_capacity(n);
    let tail = (1.0 - ci_level) / 2.0;
    let mut noisy = vec![0.0; t];

    let idx: Vec<usize> = (0..n).collect();
    for chunk in idx.chunks(SURFACE_BLOCK) {
        let locs: Vec<(f64, f64)> = chunk.iter().map(|&i| dataset.locations[i]).collect();
        let psi = basis.design_matrix(&locs);
        let mut block = DMatrix::zeros(t, chunk.len());
        for (j, a) in alphas.iter().enumerate() {
            let contrib = a * psi.transpose(); // t x |chunk|
            if include_intercept && j == 0 {
                block += contrib;
            } else {
                let col = j - usize::from(include_intercept);
                let mut scaled = contrib;
                for (c, &i) in chunk.iter().enumerate() {
                    scaled.column_mut(c).scale_mut(dataset.x[(i, col)]);
                }
                block += scaled;
            }
        }
        for (c, _) in chunk.iter().enumerate() {
            let col = block.column(c);
            point.push(col.sum() / t as f64);
            for ti in 0..t {
                noisy[ti] = col[ti] + sigma2[ti].sqrt() * rng.sample::<f64, _>(StandardNormal);
            }
            noisy.sort_by(f64::total_cmp);
            lo.push(quantile_sorted(&noisy, tail));
            hi.push(quantile_sorted(&noisy, 1.0 - tail));
        }
    }
    Ok(Predictions { point, lo, hi, ci_level })
}

/// Fraction of observations inside their prediction interval.
pub fn coverage(pred: &Predictions, observed: &DVector<f64>) -> f64 {
    let n = observed.len();
    if n == 0 {
        return 0.0;
    }
    let hits = (0..n)
        .filter(|&i| observed[i] >= pred.lo[i] && observed[i] <= pred.hi[i])
        .count();
    hits as f64 / n as f64
}
